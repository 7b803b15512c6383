//! Runs the gateway HTTP service with the cron jobs on wall-clock intervals.
//!
//!     cargo run --example gateway_server -- [gateway.toml]
//!
//! Without a config file it listens on 127.0.0.1:8080 with three demo users.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use goods_ap::gateway::{http, CronScheduler, Gateway, GatewayConfig, Role, UserAccount};
use goods_ap::ledger::TimeMode;
use goods_ap::time::SystemClock;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = match std::env::args().nth(1) {
        Some(path) => GatewayConfig::load(Path::new(&path))?,
        None => GatewayConfig::default(),
    };
    let demo = config.users_path.is_none();
    let addr: SocketAddr = config.listen.parse()?;
    let gw = Gateway::from_config(config, TimeMode::Wall(Arc::new(SystemClock)))?;
    if demo {
        for (user, org, role) in [
            ("admin", gw.operator().as_str().to_string(), Role::Admin),
            ("ap", "ACME-RETAIL".to_string(), Role::ShipperAp),
            ("ar", "SHENZHEN-HOME".to_string(), Role::SupplierAr),
        ] {
            gw.add_user_unchecked(UserAccount {
                user_id: user.into(),
                org_id: org.as_str().into(),
                role,
                api_key: format!("demo-{user}"),
            })?;
            println!("user {user} ({org}): {}: demo-{user}", http::API_KEY_HEADER);
        }
    }
    let gw = Arc::new(gw);
    let server = http::spawn(gw.clone(), addr)?;
    let _cron = CronScheduler::start(gw);
    println!("listening on {}", server.url());
    loop {
        std::thread::park();
    }
}

pub mod bench;
pub mod chaincode;
pub mod claims;
pub mod edi;
pub mod events;
pub mod gateway;
pub mod ledger;
pub mod lifecycle;
pub mod payments;
pub mod time;

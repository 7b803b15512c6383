use std::time::Duration;

use serde::{Deserialize, Serialize};

pub const DEFAULT_BLOCK_SIZE: usize = 100;
pub const DEFAULT_BLOCK_TIMEOUT: Duration = Duration::from_millis(500);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CutterConfig {
    pub block_size: usize,
    #[serde(with = "millis")]
    pub block_timeout: Duration,
}

impl Default for CutterConfig {
    fn default() -> Self {
        Self {
            block_size: DEFAULT_BLOCK_SIZE,
            block_timeout: DEFAULT_BLOCK_TIMEOUT,
        }
    }
}

pub(crate) mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// Groups ordered transactions into blocks: a block is cut as soon as
/// `size` items are pending, or once `timeout` ticks have passed since the
/// oldest pending item arrived. Time is an abstract tick count so the same
/// cutter serves millisecond wall time and microsecond virtual time.
#[derive(Debug, Clone)]
pub struct BlockCutter<T> {
    size: usize,
    timeout: u64,
    pending: Vec<T>,
    oldest: Option<u64>,
}

impl<T> BlockCutter<T> {
    pub fn new(size: usize, timeout_ticks: u64) -> Self {
        assert!(size > 0, "block size must be positive");
        Self {
            size,
            timeout: timeout_ticks,
            pending: Vec::new(),
            oldest: None,
        }
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Adds an item in arrival order; returns a full block if one is cut.
    pub fn push(&mut self, item: T, now: u64) -> Option<Vec<T>> {
        if self.pending.is_empty() {
            self.oldest = Some(now);
        }
        self.pending.push(item);
        if self.pending.len() >= self.size {
            return Some(self.take());
        }
        None
    }

    /// Cuts a partial block if the oldest pending item has timed out.
    pub fn poll(&mut self, now: u64) -> Option<Vec<T>> {
        match self.deadline() {
            Some(d) if now >= d => Some(self.take()),
            _ => None,
        }
    }

    /// When the pending batch times out, if anything is pending.
    pub fn deadline(&self) -> Option<u64> {
        self.oldest.map(|t| t.saturating_add(self.timeout))
    }

    fn take(&mut self) -> Vec<T> {
        self.oldest = None;
        std::mem::take(&mut self.pending)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instant_burst_of_150() {
        let mut c = BlockCutter::new(100, 500);
        let mut blocks = Vec::new();
        for i in 0..150 {
            if let Some(b) = c.push(i, 0) {
                blocks.push((0, b.len()));
            }
        }
        assert_eq!(c.poll(499), None);
        let last = c.poll(500).unwrap();
        blocks.push((500, last.len()));
        assert_eq!(blocks, vec![(0, 100), (500, 50)]);
        assert_eq!(c.deadline(), None);
    }

    #[test]
    fn single_tx_times_out() {
        let mut c = BlockCutter::new(100, 500);
        assert!(c.push("tx", 1000).is_none());
        assert_eq!(c.deadline(), Some(1500));
        assert!(c.poll(1499).is_none());
        assert_eq!(c.poll(1500), Some(vec!["tx"]));
    }

    #[test]
    fn empty_cutter_never_cuts() {
        let mut c: BlockCutter<u8> = BlockCutter::new(100, 500);
        assert!(c.poll(u64::MAX).is_none());
    }

    #[test]
    fn timeout_measured_from_oldest_pending() {
        let mut c = BlockCutter::new(3, 10);
        c.push(1, 0);
        c.push(2, 8);
        assert_eq!(c.poll(10), Some(vec![1, 2]));
        c.push(3, 12);
        assert_eq!(c.deadline(), Some(22));
    }
}

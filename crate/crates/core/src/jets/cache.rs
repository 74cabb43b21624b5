use std::collections::HashMap;
use std::sync::Mutex;

/// Entries kept before the cache is flushed.
const CAPACITY: usize = 1 << 17;

/// Lock-protected per-point memo keyed by the exact bit pattern of the point.
#[derive(Debug, Default)]
pub struct PointCache<V> {
    entries: Mutex<HashMap<Vec<u64>, V>>,
}

impl<V: Clone> PointCache<V> {
    pub fn new() -> Self {
        Self {
            entries: Mutex::new(HashMap::new()),
        }
    }

    fn key(x: &[f64]) -> Vec<u64> {
        x.iter().map(|v| v.to_bits()).collect()
    }

    pub fn get(&self, x: &[f64]) -> Option<V> {
        self.entries
            .lock()
            .expect("point cache poisoned")
            .get(&Self::key(x))
            .cloned()
    }

    pub fn insert(&self, x: &[f64], value: V) {
        let mut entries = self.entries.lock().expect("point cache poisoned");
        if entries.len() >= CAPACITY {
            entries.clear();
        }
        entries.insert(Self::key(x), value);
    }
}

//! Shadow model of the per-run LRU budget: which entries sit in memory
//! after each operation.

#![allow(dead_code)]

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShadowTier {
    Memory,
    Disk,
}

#[derive(Debug, Clone)]
pub struct ShadowEntry {
    pub size: u64,
    pub tier: ShadowTier,
    pub tick: u64,
}

#[derive(Debug)]
pub struct Shadow {
    pub budget: u64,
    pub entries: Vec<ShadowEntry>,
    tick: u64,
}

impl Shadow {
    pub fn new(budget: u64) -> Self {
        Shadow { budget, entries: Vec::new(), tick: 0 }
    }

    pub fn memory_used(&self) -> u64 {
        self.entries.iter().filter(|e| e.tier == ShadowTier::Memory).map(|e| e.size).sum()
    }

    fn evict_for(&mut self, incoming: u64) {
        while self.memory_used() + incoming > self.budget {
            let victim = self
                .entries
                .iter_mut()
                .filter(|e| e.tier == ShadowTier::Memory)
                .min_by_key(|e| e.tick)
                .expect("an entry within budget always fits once memory is empty");
            victim.tier = ShadowTier::Disk;
        }
    }

    /// Index of the new entry, or `None` when it can never fit.
    pub fn put(&mut self, size: u64) -> Option<usize> {
        if size > self.budget {
            return None;
        }
        self.evict_for(size);
        self.tick += 1;
        self.entries.push(ShadowEntry { size, tier: ShadowTier::Memory, tick: self.tick });
        Some(self.entries.len() - 1)
    }

    pub fn get(&mut self, i: usize) {
        if self.entries[i].tier == ShadowTier::Disk {
            let size = self.entries[i].size;
            self.evict_for(size);
            self.entries[i].tier = ShadowTier::Memory;
        }
        self.tick += 1;
        self.entries[i].tick = self.tick;
    }
}

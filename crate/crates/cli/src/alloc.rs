//! Global allocator wrapper that tracks live and peak heap bytes.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};

use rxledger_core::bench::AllocationProbe;

pub struct CountingAlloc {
    live: AtomicUsize,
    peak: AtomicUsize,
}

impl CountingAlloc {
    pub const fn new() -> Self {
        Self {
            live: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    fn grow(&self, bytes: usize) {
        let live = self.live.fetch_add(bytes, Ordering::Relaxed) + bytes;
        self.peak.fetch_max(live, Ordering::Relaxed);
    }

    fn shrink(&self, bytes: usize) {
        self.live.fetch_sub(bytes, Ordering::Relaxed);
    }
}

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            self.grow(layout.size());
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc_zeroed(layout);
        if !p.is_null() {
            self.grow(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        self.shrink(layout.size());
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = System.realloc(ptr, layout, new_size);
        if !p.is_null() {
            if new_size > layout.size() {
                self.grow(new_size - layout.size());
            } else {
                self.shrink(layout.size() - new_size);
            }
        }
        p
    }
}

/// Peak bytes allocated above the live total at `start`.
pub struct PeakProbe {
    alloc: &'static CountingAlloc,
    baseline: AtomicUsize,
}

impl PeakProbe {
    pub fn new(alloc: &'static CountingAlloc) -> Self {
        Self {
            alloc,
            baseline: AtomicUsize::new(0),
        }
    }
}

impl AllocationProbe for PeakProbe {
    fn start(&self) {
        let live = self.alloc.live.load(Ordering::Relaxed);
        self.alloc.peak.store(live, Ordering::Relaxed);
        self.baseline.store(live, Ordering::Relaxed);
    }

    fn peak_bytes(&self) -> Option<u64> {
        let peak = self.alloc.peak.load(Ordering::Relaxed);
        Some(peak.saturating_sub(self.baseline.load(Ordering::Relaxed)) as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_sees_peak_not_final_usage() {
        let probe = PeakProbe::new(&crate::ALLOC);
        probe.start();
        let big = vec![1u8; 1 << 20];
        drop(big);
        let small = vec![1u8; 16];
        let peak = probe.peak_bytes().unwrap();
        assert!(peak >= 1 << 20, "{peak}");
        drop(small);

        probe.start();
        let shrunk: Vec<u8> = Vec::with_capacity(4096);
        let peak = probe.peak_bytes().unwrap();
        assert!(peak >= 4096);
        drop(shrunk);
    }
}

//! Per-ring sample stores written by one chain and read by the chain below.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::ladder::ring_index;

/// Per-ring size limit. When a bounded ring is full, a new record overwrites
/// a uniformly chosen existing one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Capacity {
    #[default]
    Unbounded,
    Bounded(usize),
}

impl Capacity {
    fn limit(self) -> usize {
        match self {
            Capacity::Unbounded => usize::MAX,
            Capacity::Bounded(n) => n,
        }
    }
}

/// A stored `(state, energy)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingRecord<'a> {
    pub state: &'a [f64],
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RingOccupancy {
    pub size: usize,
    pub insert_count: u64,
}

#[derive(Debug, Clone, Default)]
struct Ring {
    coords: Vec<f64>,
    energies: Vec<f64>,
    inserts: u64,
}

/// Where an inserted record ended up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub ring: usize,
    pub slot: usize,
    pub evicted: bool,
}

/// `K + 1` ring buffers keyed by the ladder's energy levels.
#[derive(Debug, Clone)]
pub struct EnergyRings {
    dim: usize,
    levels: Vec<f64>,
    capacity: Capacity,
    rings: Vec<Ring>,
}

impl EnergyRings {
    pub fn new(dim: usize, levels: &[f64], capacity: Capacity) -> Self {
        assert!(!levels.is_empty(), "at least one energy level");
        if let Capacity::Bounded(n) = capacity {
            assert!(n > 0, "ring capacity must be positive");
        }
        Self {
            dim,
            levels: levels.to_vec(),
            capacity,
            rings: vec![Ring::default(); levels.len()],
        }
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn n_rings(&self) -> usize {
        self.rings.len()
    }

    pub fn capacity(&self) -> Capacity {
        self.capacity
    }

    pub fn ring_index(&self, e: f64) -> usize {
        ring_index(e, &self.levels)
    }

    pub fn len(&self, j: usize) -> usize {
        self.rings[j].energies.len()
    }

    pub fn is_empty(&self, j: usize) -> bool {
        self.rings[j].energies.is_empty()
    }

    pub fn total_len(&self) -> usize {
        self.rings.iter().map(|r| r.energies.len()).sum()
    }

    pub fn insert<R: Rng + ?Sized>(&mut self, x: &[f64], e: f64, rng: &mut R) -> Placement {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert!(e.is_finite());
        let j = self.ring_index(e);
        let limit = self.capacity.limit();
        let dim = self.dim;
        let ring = &mut self.rings[j];
        ring.inserts += 1;
        let size = ring.energies.len();
        if size < limit {
            ring.coords.extend_from_slice(x);
            ring.energies.push(e);
            Placement {
                ring: j,
                slot: size,
                evicted: false,
            }
        } else {
            let slot = rng.random_range(0..size);
            ring.coords[slot * dim..(slot + 1) * dim].copy_from_slice(x);
            ring.energies[slot] = e;
            Placement {
                ring: j,
                slot,
                evicted: true,
            }
        }
    }

    pub fn get(&self, j: usize, slot: usize) -> RingRecord<'_> {
        let ring = &self.rings[j];
        RingRecord {
            state: &ring.coords[slot * self.dim..(slot + 1) * self.dim],
            energy: ring.energies[slot],
        }
    }

    /// Uniform draw from ring `j`; `None` when the ring is empty.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, j: usize, rng: &mut R) -> Option<RingRecord<'_>> {
        let n = self.rings[j].energies.len();
        if n == 0 {
            return None;
        }
        Some(self.get(j, rng.random_range(0..n)))
    }

    pub fn occupancy(&self) -> Vec<RingOccupancy> {
        self.rings
            .iter()
            .map(|r| RingOccupancy {
                size: r.energies.len(),
                insert_count: r.inserts,
            })
            .collect()
    }

    /// Every stored record, ring by ring.
    pub fn iter(&self) -> impl Iterator<Item = RingRecord<'_>> + '_ {
        self.rings.iter().flat_map(move |r| {
            r.coords
                .chunks_exact(self.dim)
                .zip(&r.energies)
                .map(|(state, &energy)| RingRecord { state, energy })
        })
    }

    /// Write one CSV per ring (`coord_1..coord_d,energy`) named
    /// `{prefix}_ring{j}.csv` inside `dir`.
    pub fn write_csv(&self, dir: &Path, prefix: &str) -> Result<()> {
        for j in 0..self.rings.len() {
            let path = dir.join(format!("{prefix}_ring{j}.csv"));
            let write = || -> std::io::Result<()> {
                let mut w = BufWriter::new(File::create(&path)?);
                writeln!(w, "{}", coord_header(self.dim, false))?;
                for slot in 0..self.len(j) {
                    let rec = self.get(j, slot);
                    for v in rec.state {
                        write!(w, "{v},")?;
                    }
                    writeln!(w, "{}", rec.energy)?;
                }
                w.flush()
            };
            write().map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

pub(crate) fn coord_header(dim: usize, with_iter: bool) -> String {
    let mut cols: Vec<String> = Vec::with_capacity(dim + 2);
    if with_iter {
        cols.push("iter".into());
    }
    cols.extend((1..=dim).map(|c| format!("coord_{c}")));
    cols.push("energy".into());
    cols.join(",")
}

/// Probabilities of proposing ring `m` from ring `j`: `rho^|m - j|`,
/// normalized over `0..=k_max`. `rho = 0` puts all mass on `j`.
pub fn cross_ring_probabilities(j: usize, k_max: usize, rho: f64) -> Vec<f64> {
    debug_assert!(j <= k_max);
    let w: Vec<f64> = (0..=k_max)
        .map(|m| if m == j { 1.0 } else { rho.powi(m.abs_diff(j) as i32) })
        .collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

/// Draw a ring index `m` with probability proportional to `rho^|m - j|`.
pub fn cross_ring_proposal_index<R: Rng + ?Sized>(j: usize, k_max: usize, rho: f64, rng: &mut R) -> usize {
    assert!(j <= k_max, "ring {j} outside 0..={k_max}");
    assert!((0.0..1.0).contains(&rho), "rho must be in [0, 1)");
    if rho == 0.0 || k_max == 0 {
        return j;
    }
    let probs = cross_ring_probabilities(j, k_max, rho);
    let mut u: f64 = rng.random();
    for (m, p) in probs.iter().enumerate() {
        if u < *p {
            return m;
        }
        u -= p;
    }
    k_max
}

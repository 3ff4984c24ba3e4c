//! Random ¹³C clusters around an NV centre and their dipolar hyperfine couplings.
//!
//! Sites live in the NV frame: the vacancy is the origin and the NV axis
//! (crystal `[111]`, vacancy → nitrogen) is `+z`.

use alloc::vec::Vec;

use libm::sqrt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{ElectronModel, ModelError, NuclearSpinParams, PhysicalConstants, Species, SpinSystem};

/// Natural ¹³C abundance.
pub const NATURAL_ABUNDANCE: f64 = 0.011;
/// Carbon–carbon bond length in nm.
pub const BOND_LENGTH_NM: f64 = 0.155;
/// Default `A_⊥` cap in MHz.
pub const A_PERP_CAP_MHZ: f64 = 0.1;

const SITE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("radius must be positive, got {0}")]
    Radius(f64),
    #[error("abundance must lie in [0, 1], got {0}")]
    Abundance(f64),
    #[error("nucleus at the vacancy has no defined coupling")]
    ZeroPosition,
    #[error("n_nuc must be at least 1")]
    NoNuclei,
    #[error("no acceptable configuration after {0} attempts")]
    Exhausted(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Lattice site in nm, NV frame.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LatticeSite {
    pub position: [f64; 3],
}

impl LatticeSite {
    pub fn radius(&self) -> f64 {
        norm(self.position)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LatticeOptions {
    pub bond_length: f64,
    /// Keep the substitutional nitrogen site as a carbon candidate.
    pub include_nitrogen: bool,
}

impl Default for LatticeOptions {
    fn default() -> Self {
        Self { bond_length: BOND_LENGTH_NM, include_nitrogen: false }
    }
}

impl LatticeOptions {
    /// Cubic lattice constant `4 b / √3`.
    pub fn lattice_constant(&self) -> f64 {
        4.0 * self.bond_length / sqrt(3.0)
    }
}

fn norm(v: [f64; 3]) -> f64 {
    sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Crystal coordinates → NV frame (`[111]` → `z`).
pub fn crystal_to_nv_frame(v: [f64; 3]) -> [f64; 3] {
    let (s2, s3, s6) = (sqrt(2.0), sqrt(3.0), sqrt(6.0));
    [(v[0] - v[1]) / s2, (v[0] + v[1] - 2.0 * v[2]) / s6, (v[0] + v[1] + v[2]) / s3]
}

/// Diamond sites in crystal coordinates (nm) within `radius` of the vacancy, vacancy excluded.
pub fn crystal_sites(radius: f64, options: &LatticeOptions) -> Result<Vec<[f64; 3]>, ClusterError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(ClusterError::Radius(radius));
    }
    let a = options.lattice_constant();
    let fcc = [[0.0, 0.0, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]];
    let nitrogen = [a / 4.0; 3];
    let m = libm::ceil(radius / a) as i64 + 1;
    let mut sites = Vec::new();
    for i in -m..=m {
        for j in -m..=m {
            for k in -m..=m {
                for shift in [0.0, 0.25] {
                    for b in &fcc {
                        let p = [(i as f64 + b[0] + shift) * a, (j as f64 + b[1] + shift) * a, (k as f64 + b[2] + shift) * a];
                        let r = norm(p);
                        if r < SITE_TOL || r > radius + SITE_TOL {
                            continue;
                        }
                        if !options.include_nitrogen
                            && norm([p[0] - nitrogen[0], p[1] - nitrogen[1], p[2] - nitrogen[2]]) < SITE_TOL
                        {
                            continue;
                        }
                        sites.push(p);
                    }
                }
            }
        }
    }
    Ok(sites)
}

/// Candidate carbon sites within `radius` nm of the vacancy, in the NV frame.
pub fn build_lattice(radius: f64) -> Result<Vec<LatticeSite>, ClusterError> {
    build_lattice_with(radius, &LatticeOptions::default())
}

pub fn build_lattice_with(radius: f64, options: &LatticeOptions) -> Result<Vec<LatticeSite>, ClusterError> {
    Ok(crystal_sites(radius, options)?.into_iter().map(|p| LatticeSite { position: crystal_to_nv_frame(p) }).collect())
}

/// Independent Bernoulli occupation of `site_count` sites; returns occupied indices.
pub fn sample_occupation<R: Rng + ?Sized>(site_count: usize, rng: &mut R, abundance: f64) -> Result<Vec<usize>, ClusterError> {
    if !(0.0..=1.0).contains(&abundance) {
        return Err(ClusterError::Abundance(abundance));
    }
    Ok((0..site_count).filter(|_| rng.random::<f64>() < abundance).collect())
}

/// Occupation drawn from stream `stream` of the generator seeded with `seed`.
pub fn sample_occupation_seeded(site_count: usize, seed: u64, stream: u64, abundance: f64) -> Result<Vec<usize>, ClusterError> {
    sample_occupation(site_count, &mut config_rng(seed, stream), abundance)
}

/// Generator of configuration `stream` under master seed `seed`.
pub fn config_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `(A_∥, |A_⊥|)` in MHz of a ¹³C at `position` (nm) for a field along `b0_direction`.
pub fn hyperfine_from_position(position: [f64; 3], b0_direction: [f64; 3]) -> Result<(f64, f64), ClusterError> {
    hyperfine_for_species(position, b0_direction, Species::C13)
}

pub fn hyperfine_for_species(position: [f64; 3], b0_direction: [f64; 3], species: Species) -> Result<(f64, f64), ClusterError> {
    let r = norm(position);
    let b = norm(b0_direction);
    if !(r > 0.0) || !(b > 0.0) {
        return Err(ClusterError::ZeroPosition);
    }
    let cos_t = (dot(position, b0_direction) / (r * b)).clamp(-1.0, 1.0);
    let sin_t = sqrt(1.0 - cos_t * cos_t);
    let pref = PhysicalConstants::CODATA.dipolar_prefactor(species, r);
    Ok((pref * (3.0 * cos_t * cos_t - 1.0), (pref * 3.0 * cos_t * sin_t).abs()))
}

/// Occupied site with its couplings.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClusterNucleus {
    pub position: [f64; 3],
    pub a_par: f64,
    pub a_perp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CapMode {
    /// Any occupied nucleus at or above the cap rejects the configuration.
    #[default]
    RejectConfiguration,
    /// Nuclei at or above the cap are dropped before selection.
    FilterNuclei,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    Accepted(Vec<ClusterNucleus>),
    Rejected { max_a_perp: f64 },
    TooFew { available: usize },
}

/// The `n_nuc` largest-`A_⊥` nuclei in descending order, subject to the cap.
pub fn select_cluster(occupied: &[ClusterNucleus], n_nuc: usize, cap: f64, mode: CapMode) -> Selection {
    let max_a_perp = occupied.iter().map(|n| n.a_perp).fold(0.0, f64::max);
    let mut pool: Vec<ClusterNucleus> = match mode {
        CapMode::RejectConfiguration if max_a_perp >= cap => return Selection::Rejected { max_a_perp },
        CapMode::RejectConfiguration => occupied.to_vec(),
        CapMode::FilterNuclei => occupied.iter().copied().filter(|n| n.a_perp < cap).collect(),
    };
    if pool.len() < n_nuc {
        return Selection::TooFew { available: pool.len() };
    }
    // stable sort: ties keep site order
    pool.sort_by(|a, b| b.a_perp.total_cmp(&a.a_perp));
    pool.truncate(n_nuc);
    Selection::Accepted(pool)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClusterOptions {
    pub radius: f64,
    pub abundance: f64,
    pub n_nuc: usize,
    pub a_perp_cap: f64,
    pub cap_mode: CapMode,
    pub lattice: LatticeOptions,
    pub max_attempts: usize,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        Self {
            radius: 2.0,
            abundance: NATURAL_ABUNDANCE,
            n_nuc: 6,
            a_perp_cap: A_PERP_CAP_MHZ,
            cap_mode: CapMode::RejectConfiguration,
            lattice: LatticeOptions::default(),
            max_attempts: 100_000,
        }
    }
}

/// One accepted configuration.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClusterConfig {
    pub seed: u64,
    pub index: u64,
    /// Draws consumed, including rejected ones.
    pub attempts: usize,
    pub b0_direction: [f64; 3],
    pub occupied: Vec<[f64; 3]>,
    /// Sorted by descending `a_perp`.
    pub selected: Vec<ClusterNucleus>,
}

impl ClusterConfig {
    /// `Σ A_⊥ / N` over the selected nuclei.
    pub fn mean_a_perp(&self) -> f64 {
        self.selected.iter().map(|n| n.a_perp).sum::<f64>() / self.selected.len() as f64
    }

    pub fn nuclear_params(&self) -> Vec<NuclearSpinParams> {
        self.selected.iter().map(|n| NuclearSpinParams::new(n.a_par, n.a_perp)).collect()
    }

    /// NV-centre system at Larmor frequency `larmor_mhz`.
    pub fn spin_system(&self, larmor_mhz: f64) -> Result<SpinSystem, ClusterError> {
        Ok(SpinSystem::new(ElectronModel::nv_effective(), self.nuclear_params(), larmor_mhz)?)
    }
}

/// Lattice with precomputed couplings, shared by every configuration.
#[derive(Debug, Clone)]
pub struct ClusterGenerator {
    pub options: ClusterOptions,
    pub seed: u64,
    sites: Vec<ClusterNucleus>,
}

impl ClusterGenerator {
    pub fn new(options: ClusterOptions, seed: u64) -> Result<Self, ClusterError> {
        if options.n_nuc == 0 {
            return Err(ClusterError::NoNuclei);
        }
        if !(0.0..=1.0).contains(&options.abundance) {
            return Err(ClusterError::Abundance(options.abundance));
        }
        let sites = build_lattice_with(options.radius, &options.lattice)?
            .into_iter()
            .map(|s| {
                let (a_par, a_perp) = hyperfine_from_position(s.position, [0.0, 0.0, 1.0])?;
                Ok(ClusterNucleus { position: s.position, a_par, a_perp })
            })
            .collect::<Result<_, ClusterError>>()?;
        Ok(Self { options, seed, sites })
    }

    pub fn site_count(&self) -> usize {
        self.sites.len()
    }

    /// Configuration `index`: draws occupations from its own stream until one is accepted.
    pub fn generate(&self, index: u64) -> Result<ClusterConfig, ClusterError> {
        let mut rng = config_rng(self.seed, index);
        let o = &self.options;
        for attempt in 1..=o.max_attempts {
            let occupied_idx = sample_occupation(self.sites.len(), &mut rng, o.abundance)?;
            let occupied: Vec<ClusterNucleus> = occupied_idx.iter().map(|&i| self.sites[i]).collect();
            if let Selection::Accepted(selected) = select_cluster(&occupied, o.n_nuc, o.a_perp_cap, o.cap_mode) {
                return Ok(ClusterConfig {
                    seed: self.seed,
                    index,
                    attempts: attempt,
                    b0_direction: [0.0, 0.0, 1.0],
                    occupied: occupied.iter().map(|n| n.position).collect(),
                    selected,
                });
            }
        }
        Err(ClusterError::Exhausted(o.max_attempts))
    }
}

//! Truncated bosonic Fock space over link, hooker and marker modes.
//!
//! Cities are indexed from 0; city 0 is the home city every tour starts
//! from, and it carries no hooker or marker mode. A link mode `(to, from)`
//! counts traversals that leave `from` and arrive at `to`.
//!
//! Basis states are occupation vectors ordered lexicographically over the
//! mode list (links, then hookers, then markers). Ladder operators use a hard
//! cutoff: raising a state that would leave the enumerated basis yields zero.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{SparseOperator, StateVector};

/// Default ceiling on the number of enumerated basis states.
pub const DEFAULT_STATE_BUDGET: usize = 4_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModeKind {
    Link { to: usize, from: usize },
    Hooker(usize),
    Marker(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sector {
    Link,
    Hooker,
    Marker,
}

impl ModeKind {
    pub fn sector(self) -> Sector {
        match self {
            ModeKind::Link { .. } => Sector::Link,
            ModeKind::Hooker(_) => Sector::Hooker,
            ModeKind::Marker(_) => Sector::Marker,
        }
    }
}

/// The ordered list of bosonic modes for an `n_cities` instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeRegistry {
    n_cities: usize,
    symmetric_links: bool,
    modes: Vec<ModeKind>,
    n_links: usize,
}

impl ModeRegistry {
    /// Directed mode registers every ordered pair `(to, from)` with `to != from`;
    /// symmetric mode registers each unordered pair once as `(min, max)`.
    pub fn new(n_cities: usize, symmetric_links: bool) -> Result<Self> {
        if n_cities < 3 {
            return Err(Error::InvalidRegistry(format!(
                "need at least 3 cities, got {n_cities}"
            )));
        }
        let mut modes = Vec::new();
        for to in 0..n_cities {
            for from in 0..n_cities {
                let keep = if symmetric_links { to < from } else { to != from };
                if keep {
                    modes.push(ModeKind::Link { to, from });
                }
            }
        }
        let n_links = modes.len();
        modes.extend((1..n_cities).map(ModeKind::Hooker));
        modes.extend((1..n_cities).map(ModeKind::Marker));
        Ok(Self { n_cities, symmetric_links, modes, n_links })
    }

    pub fn n_cities(&self) -> usize {
        self.n_cities
    }

    pub fn symmetric_links(&self) -> bool {
        self.symmetric_links
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn n_links(&self) -> usize {
        self.n_links
    }

    pub fn modes(&self) -> &[ModeKind] {
        &self.modes
    }

    pub fn mode(&self, index: usize) -> Result<ModeKind> {
        self.modes.get(index).copied().ok_or(Error::UnknownMode(index))
    }

    /// Mode index of the link leaving `from` and arriving at `to`.
    pub fn link_mode(&self, to: usize, from: usize) -> Option<usize> {
        if to == from || to >= self.n_cities || from >= self.n_cities {
            return None;
        }
        let (to, from) = if self.symmetric_links { (to.min(from), to.max(from)) } else { (to, from) };
        self.modes[..self.n_links]
            .iter()
            .position(|&m| m == ModeKind::Link { to, from })
    }

    pub fn hooker_mode(&self, city: usize) -> Option<usize> {
        (1..self.n_cities).contains(&city).then(|| self.n_links + city - 1)
    }

    pub fn marker_mode(&self, city: usize) -> Option<usize> {
        (1..self.n_cities)
            .contains(&city)
            .then(|| self.n_links + self.n_cities - 1 + city - 1)
    }

    pub fn link_endpoints(&self, mode: usize) -> Option<(usize, usize)> {
        match self.modes.get(mode)? {
            ModeKind::Link { to, from } => Some((*to, *from)),
            _ => None,
        }
    }

    /// Range of mode indices belonging to `sector`.
    pub fn sector_range(&self, sector: Sector) -> std::ops::Range<usize> {
        let h = self.n_cities - 1;
        match sector {
            Sector::Link => 0..self.n_links,
            Sector::Hooker => self.n_links..self.n_links + h,
            Sector::Marker => self.n_links + h..self.n_links + 2 * h,
        }
    }
}

/// Per-mode and per-sector occupation caps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupationCutoff {
    pub per_mode_max: u8,
    pub link_total_max: Option<u32>,
    pub hooker_total_max: Option<u32>,
    pub marker_total_max: Option<u32>,
}

impl OccupationCutoff {
    pub fn uniform(per_mode_max: u8) -> Self {
        Self { per_mode_max, link_total_max: None, hooker_total_max: None, marker_total_max: None }
    }

    /// Caps that keep every intermediate of the filter product inside the
    /// basis for inputs in the hooker/marker vacuum: one hook and `N-1`
    /// markers in total.
    pub fn filter_ready(n_cities: usize, per_mode_max: u8, link_total_max: Option<u32>) -> Self {
        Self {
            per_mode_max,
            link_total_max,
            hooker_total_max: Some(1),
            marker_total_max: Some(n_cities as u32 - 1),
        }
    }

    /// Caps for dynamics runs: two quanta per mode.
    pub fn dynamics_default(n_cities: usize) -> Self {
        Self::filter_ready(n_cities, 2, None)
    }

    /// Caps for static target-Hamiltonian diagnostics: `N` quanta per mode and
    /// at most `N+1` links in total.
    pub fn static_default(n_cities: usize) -> Self {
        Self::filter_ready(n_cities, n_cities as u8, Some(n_cities as u32 + 1))
    }

    /// Sector totals may sit below `per_mode_max`; they simply bind first.
    pub fn validate(&self) -> Result<()> {
        if self.per_mode_max < 1 {
            return Err(Error::InvalidCutoff("per_mode_max must be at least 1".into()));
        }
        Ok(())
    }

    pub fn total_max(&self, sector: Sector) -> Option<u32> {
        match sector {
            Sector::Link => self.link_total_max,
            Sector::Hooker => self.hooker_total_max,
            Sector::Marker => self.marker_total_max,
        }
    }
}

/// Number of vectors in `[0, cap]^modes` whose sum is at most `total`.
pub fn count_capped(modes: usize, cap: u32, total: Option<u32>) -> u128 {
    let total = total.unwrap_or(cap.saturating_mul(modes as u32)) as usize;
    // ways[s] = number of prefixes summing to s
    let mut ways = vec![0u128; total + 1];
    ways[0] = 1;
    for _ in 0..modes {
        let mut next = vec![0u128; total + 1];
        for (s, &w) in ways.iter().enumerate() {
            if w == 0 {
                continue;
            }
            for n in 0..=cap as usize {
                if s + n > total {
                    break;
                }
                next[s + n] = next[s + n].saturating_add(w);
            }
        }
        ways = next;
    }
    ways.iter().fold(0u128, |a, &b| a.saturating_add(b))
}

/// Occupation vector over the registry's modes.
pub type BasisState = Vec<u8>;

/// Lexicographically ordered list of admissible occupation vectors.
#[derive(Clone, Debug)]
pub struct Basis {
    registry: ModeRegistry,
    cutoff: OccupationCutoff,
    n_modes: usize,
    states: Vec<u8>,
    fixed_links: Option<Vec<u8>>,
}

impl Basis {
    pub fn enumerate(registry: &ModeRegistry, cutoff: &OccupationCutoff) -> Result<Self> {
        Self::enumerate_with_budget(registry, cutoff, DEFAULT_STATE_BUDGET)
    }

    pub fn enumerate_with_budget(
        registry: &ModeRegistry,
        cutoff: &OccupationCutoff,
        budget: usize,
    ) -> Result<Self> {
        cutoff.validate()?;
        let count = Self::expected_count(registry, cutoff);
        if count > budget as u128 {
            return Err(capacity_error(count, budget, cutoff));
        }
        let mut basis = Self {
            registry: registry.clone(),
            cutoff: *cutoff,
            n_modes: registry.n_modes(),
            states: Vec::with_capacity(count as usize * registry.n_modes()),
            fixed_links: None,
        };
        let mut current = vec![0u8; registry.n_modes()];
        basis.fill(0, &mut current, [0; 3]);
        debug_assert_eq!(basis.len() as u128, count);
        Ok(basis)
    }

    /// The block of states whose link occupations equal `links`; the hooker
    /// and marker sectors range over everything the caps allow.
    pub fn enumerate_block(
        registry: &ModeRegistry,
        cutoff: &OccupationCutoff,
        links: &[u8],
    ) -> Result<Self> {
        cutoff.validate()?;
        if links.len() != registry.n_links() {
            return Err(Error::DimensionMismatch { left: registry.n_links(), right: links.len() });
        }
        let mut basis = Self {
            registry: registry.clone(),
            cutoff: *cutoff,
            n_modes: registry.n_modes(),
            states: Vec::new(),
            fixed_links: Some(links.to_vec()),
        };
        let mut current = vec![0u8; registry.n_modes()];
        current[..links.len()].copy_from_slice(links);
        let link_total: u32 = links.iter().map(|&n| n as u32).sum();
        basis.fill(registry.n_links(), &mut current, [link_total, 0, 0]);
        Ok(basis)
    }

    /// Combinatorial count implied by the caps.
    pub fn expected_count(registry: &ModeRegistry, cutoff: &OccupationCutoff) -> u128 {
        [Sector::Link, Sector::Hooker, Sector::Marker]
            .into_iter()
            .map(|s| {
                let modes = registry.sector_range(s).len();
                count_capped(modes, cutoff.per_mode_max as u32, cutoff.total_max(s))
            })
            .fold(1u128, |a, b| a.saturating_mul(b))
    }

    fn fill(&mut self, mode: usize, current: &mut [u8], totals: [u32; 3]) {
        if mode == self.n_modes {
            self.states.extend_from_slice(current);
            return;
        }
        let sector = self.registry.modes[mode].sector();
        let slot = sector as usize;
        let room = self
            .cutoff
            .total_max(sector)
            .map_or(u32::MAX, |cap| cap.saturating_sub(totals[slot]));
        let top = (self.cutoff.per_mode_max as u32).min(room);
        for n in 0..=top {
            current[mode] = n as u8;
            let mut next = totals;
            next[slot] += n;
            self.fill(mode + 1, current, next);
        }
        current[mode] = 0;
    }

    pub fn registry(&self) -> &ModeRegistry {
        &self.registry
    }

    pub fn cutoff(&self) -> &OccupationCutoff {
        &self.cutoff
    }

    pub fn fixed_links(&self) -> Option<&[u8]> {
        self.fixed_links.as_deref()
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.n_modes
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, index: usize) -> &[u8] {
        &self.states[index * self.n_modes..(index + 1) * self.n_modes]
    }

    pub fn states(&self) -> impl Iterator<Item = &[u8]> {
        self.states.chunks_exact(self.n_modes)
    }

    /// Index of `state`, or `None` when it lies outside the truncated space.
    pub fn index_of(&self, state: &[u8]) -> Option<usize> {
        if state.len() != self.n_modes {
            return None;
        }
        let (mut lo, mut hi) = (0usize, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.state(mid).cmp(state) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(mid),
            }
        }
        None
    }

    /// Indices of the states whose hooker and marker sectors are empty.
    pub fn vacuum_sector_indices(&self) -> Vec<usize> {
        let n_links = self.registry.n_links();
        (0..self.len())
            .filter(|&i| self.state(i)[n_links..].iter().all(|&n| n == 0))
            .collect()
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.n_modes {
            return Err(Error::UnknownMode(mode));
        }
        Ok(())
    }

    /// Creation operator of `mode`; `√(n+1)` matrix elements.
    pub fn creation(&self, mode: usize) -> Result<SparseOperator> {
        self.shift_operator(mode, 1)
    }

    /// Annihilation operator of `mode`; `√n` matrix elements.
    pub fn annihilation(&self, mode: usize) -> Result<SparseOperator> {
        self.shift_operator(mode, -1)
    }

    pub fn number(&self, mode: usize) -> Result<SparseOperator> {
        self.check_mode(mode)?;
        let diag: Vec<f64> = self.states().map(|s| s[mode] as f64).collect();
        Ok(SparseOperator::from_real_diagonal(&diag))
    }

    /// `(creation, annihilation, number)` for one mode.
    pub fn ladder_ops(&self, mode: usize) -> Result<(SparseOperator, SparseOperator, SparseOperator)> {
        Ok((self.creation(mode)?, self.annihilation(mode)?, self.number(mode)?))
    }

    fn shift_operator(&self, mode: usize, delta: i32) -> Result<SparseOperator> {
        self.check_mode(mode)?;
        let mut triplets = Vec::with_capacity(self.len());
        let mut scratch = vec![0u8; self.n_modes];
        for (col, state) in self.states().enumerate() {
            let n = state[mode] as i32;
            let m = n + delta;
            if m < 0 || m > u8::MAX as i32 {
                continue;
            }
            scratch.copy_from_slice(state);
            scratch[mode] = m as u8;
            if let Some(row) = self.index_of(&scratch) {
                let amp = (n.max(m) as f64).sqrt();
                triplets.push((row, col, Complex64::new(amp, 0.0)));
            }
        }
        SparseOperator::from_triplets(self.len(), &triplets)
    }

    /// Extends a single-mode operator, given as a matrix over occupations
    /// `0..=per_mode_max`, to the whole basis; other modes act as identity.
    pub fn embed_mode_operator(&self, mode: usize, local: &DMatrix<Complex64>) -> Result<SparseOperator> {
        self.check_mode(mode)?;
        let local_dim = self.cutoff.per_mode_max as usize + 1;
        if local.nrows() != local_dim || local.ncols() != local_dim {
            return Err(Error::DimensionMismatch { left: local_dim, right: local.nrows() });
        }
        let mut triplets = Vec::new();
        let mut scratch = vec![0u8; self.n_modes];
        for (col, state) in self.states().enumerate() {
            let n = state[mode] as usize;
            scratch.copy_from_slice(state);
            for m in 0..local_dim {
                let v = local[(m, n)];
                if v == Complex64::new(0.0, 0.0) {
                    continue;
                }
                scratch[mode] = m as u8;
                if let Some(row) = self.index_of(&scratch) {
                    triplets.push((row, col, v));
                }
            }
        }
        SparseOperator::from_triplets(self.len(), &triplets)
    }

    /// Sum of the number operators over a sector.
    pub fn sector_number(&self, sector: Sector) -> SparseOperator {
        let range = self.registry.sector_range(sector);
        let diag: Vec<f64> = self
            .states()
            .map(|s| s[range.clone()].iter().map(|&n| n as f64).sum())
            .collect();
        SparseOperator::from_real_diagonal(&diag)
    }
}

fn capacity_error(count: u128, budget: usize, cutoff: &OccupationCutoff) -> Error {
    Error::Capacity {
        count,
        budget,
        per_mode_max: cutoff.per_mode_max,
        link_total_max: cutoff.link_total_max,
        hooker_total_max: cutoff.hooker_total_max,
        marker_total_max: cutoff.marker_total_max,
    }
}

/// Truncated product coherent state on the link modes, vacuum elsewhere.
#[derive(Clone, Debug)]
pub struct CoherentState {
    pub state: StateVector,
    /// Probability mass of the exact coherent state that falls outside the basis.
    pub truncation_weight: f64,
}

impl CoherentState {
    pub fn exceeds(&self, tolerance: f64) -> bool {
        self.truncation_weight > tolerance
    }
}

/// Builds `⊗ |θ_ij⟩ ⊗ |0⟩_h ⊗ |0⟩_m` restricted to `basis` and renormalized.
///
/// `theta` holds one displacement per link mode. The truncation weight is
/// `1 - Σ |unnormalized amplitude|²`; without sector caps this is
/// `1 - Π_modes e^{-|θ|²} Σ_{n≤cap} |θ|^{2n}/n!`.
pub fn coherent_state(basis: &Basis, theta: &[Complex64]) -> Result<CoherentState> {
    let registry = basis.registry();
    if theta.len() != registry.n_links() {
        return Err(Error::DimensionMismatch { left: registry.n_links(), right: theta.len() });
    }
    if theta.iter().any(|t| !t.re.is_finite() || !t.im.is_finite()) {
        return Err(Error::InvalidArgument("theta must be finite".into()));
    }
    let cap = basis.cutoff().per_mode_max as usize;
    // per-mode amplitude tables e^{-|θ|²/2} θ^n / √n!
    let tables: Vec<Vec<Complex64>> = theta
        .iter()
        .map(|&t| {
            let mut row = Vec::with_capacity(cap + 1);
            let mut term = Complex64::new((-t.norm_sqr() / 2.0).exp(), 0.0);
            for n in 0..=cap {
                row.push(term);
                term = term * t / ((n + 1) as f64).sqrt();
            }
            row
        })
        .collect();
    let n_links = registry.n_links();
    let mut amps = Vec::with_capacity(basis.len());
    for state in basis.states() {
        if state[n_links..].iter().any(|&n| n != 0) {
            amps.push(Complex64::new(0.0, 0.0));
            continue;
        }
        let mut a = Complex64::new(1.0, 0.0);
        for (k, &n) in state[..n_links].iter().enumerate() {
            a *= tables[k][n as usize];
        }
        amps.push(a);
    }
    let raw = StateVector::new(amps);
    let retained = raw.norm().powi(2);
    let truncation_weight = (1.0 - retained).max(0.0);
    let state = raw.normalized()?;
    if truncation_weight > 1e-2 {
        log::warn!("coherent state truncation weight {truncation_weight:.3e} exceeds 1e-2");
    }
    Ok(CoherentState { state, truncation_weight })
}

/// Retained probability of a single-mode coherent state below the cap.
pub fn retained_probability(theta: Complex64, cap: u8) -> f64 {
    let x = theta.norm_sqr();
    let mut term = 1.0;
    let mut sum = 0.0;
    for n in 0..=cap as u32 {
        sum += term;
        term *= x / (n + 1) as f64;
    }
    (-x).exp() * sum
}

/// Same displacement on every link mode.
pub fn uniform_theta(registry: &ModeRegistry, theta: Complex64) -> Vec<Complex64> {
    vec![theta; registry.n_links()]
}

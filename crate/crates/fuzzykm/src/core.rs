//! Fuzzy k-means mathematics.
//!
//! The objective being studied is
//!
//! ```text
//! J(X, mu, U) = sum_i sum_j U[i][j]^alpha * ||x_i - mu_j||^2
//! ```
//!
//! over centers `mu` and a row-stochastic membership matrix `U`, with
//! fuzzifier `alpha > 1`. Holding one block fixed, the other has a closed-form
//! optimum ([`update_memberships`] / [`update_centers`]); alternating them is
//! Lloyd's algorithm ([`lloyd_fuzzy`]).
//!
//! Two structural quantities drive the query solvers built on top:
//! [`beta_of`] (k/n times the smallest column mass of `U`) and [`gamma_of`]
//! (the largest radius around any center within which the distance-sorted
//! order of the dataset cannot change).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Two points closer than this are treated as coincident when evaluating the
/// membership update (where the closed form is singular).
pub const COINCIDENCE_TOL: f64 = 1e-12;

/// Default absolute tolerance for consistency and validity checks.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cluster {0} has zero membership mass")]
    DegenerateCluster(usize),
    #[error("coincident centers make the validity index degenerate")]
    CoincidentCenters,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid membership matrix: {0}")]
    Validity(String),
}

// ---------------------------------------------------------------------------
// small vector helpers, shared across the crate
// ---------------------------------------------------------------------------

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// domain types
// ---------------------------------------------------------------------------

/// A set of `n` points in `d`-dimensional Euclidean space, all within the ball
/// of radius `radius` around the origin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    points: Vec<Vec<f64>>,
    radius: f64,
}

impl Dataset {
    /// Builds a dataset, computing the enclosing radius as the maximum norm.
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self, CoreError> {
        if points.is_empty() {
            return Err(CoreError::Shape(
                "dataset must contain at least one point".into(),
            ));
        }
        let d = points[0].len();
        if d == 0 {
            return Err(CoreError::Shape("points must have dimension >= 1".into()));
        }
        let mut radius: f64 = 0.0;
        for (i, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(CoreError::Shape(format!(
                    "point {i} has dimension {}, expected {d}",
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::Shape(format!(
                    "point {i} has a non-finite coordinate"
                )));
            }
            radius = radius.max(norm(p));
        }
        Ok(Self { points, radius })
    }

    /// Builds a dataset with an explicit enclosing radius (must cover every point).
    pub fn with_radius(points: Vec<Vec<f64>>, radius: f64) -> Result<Self, CoreError> {
        let ds = Self::new(points)?;
        if radius < ds.radius {
            return Err(CoreError::Shape(format!(
                "declared radius {radius} is smaller than the maximum point norm {}",
                ds.radius
            )));
        }
        Ok(Self { radius, ..ds })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires n >= 1
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
}

/// An `n x k` matrix of membership weights.
///
/// Construction checks shape and finiteness only; solver estimates may stray
/// slightly outside `[0, 1]` before renormalization. [`MembershipMatrix::validate_fuzzy`]
/// enforces the full constraints of a valid fuzzy solution (rows on the
/// simplex, entries in `[0, 1]`, every column mass strictly inside `(0, n)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipMatrix {
    entries: Vec<Vec<f64>>,
}

impl MembershipMatrix {
    pub fn new(entries: Vec<Vec<f64>>) -> Result<Self, CoreError> {
        if entries.is_empty() {
            return Err(CoreError::Shape(
                "membership matrix must have at least one row".into(),
            ));
        }
        let k = entries[0].len();
        if k == 0 {
            return Err(CoreError::Shape(
                "membership matrix must have at least one column".into(),
            ));
        }
        for (i, row) in entries.iter().enumerate() {
            if row.len() != k {
                return Err(CoreError::Shape(format!(
                    "membership row {i} has {} entries, expected {k}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::Shape(format!(
                    "membership row {i} has a non-finite entry"
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn k(&self) -> usize {
        self.entries[0].len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.entries
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        self.entries.iter().map(|r| r[j]).sum()
    }

    /// Checks the constraints of a valid fuzzy solution at tolerance `tol`.
    pub fn validate_fuzzy(&self, tol: f64) -> Result<(), CoreError> {
        let n = self.n() as f64;
        for (i, row) in self.entries.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(CoreError::Validity(format!("row {i} sums to {sum}, not 1")));
            }
            if row.iter().any(|&v| !(-tol..=1.0 + tol).contains(&v)) {
                return Err(CoreError::Validity(format!("row {i} leaves [0, 1]")));
            }
        }
        for j in 0..self.k() {
            let mass = self.column_sum(j);
            if mass <= 0.0 || mass >= n {
                return Err(CoreError::Validity(format!(
                    "column {j} mass {mass} outside the open interval (0, n)"
                )));
            }
        }
        Ok(())
    }
}

/// A clustering: `k` centers paired with an `n x k` membership matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Clustering {
    centers: Vec<Vec<f64>>,
    memberships: MembershipMatrix,
}

impl Clustering {
    pub fn new(centers: Vec<Vec<f64>>, memberships: MembershipMatrix) -> Result<Self, CoreError> {
        if centers.len() != memberships.k() {
            return Err(CoreError::Shape(format!(
                "{} centers but membership matrix has {} columns",
                centers.len(),
                memberships.k()
            )));
        }
        let d = centers.first().map(|c| c.len()).unwrap_or(0);
        if centers.iter().any(|c| c.len() != d) {
            return Err(CoreError::Shape(
                "centers have inconsistent dimensions".into(),
            ));
        }
        Ok(Self {
            centers,
            memberships,
        })
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn memberships(&self) -> &MembershipMatrix {
        &self.memberships
    }

    pub fn into_parts(self) -> (Vec<Vec<f64>>, MembershipMatrix) {
        (self.centers, self.memberships)
    }
}

/// Parameters shared by the query solvers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Fuzzifier; must be > 1 (the membership update is singular at 1).
    pub alpha: f64,
    /// Stage-one sample count.
    pub m: usize,
    /// Per-bin sample count for the sequential and two-cluster solvers.
    pub r: usize,
    /// Grid width for the two-phase solver.
    pub eta: f64,
    /// Intermediate grid width for the sequential solver.
    pub eta1: f64,
    /// Final grid width for the sequential solver.
    pub eta2: f64,
    /// Failure budget (reported, not enforced; sample sizes are explicit).
    pub delta: f64,
    /// Seed for the per-stage RNG substreams.
    pub seed: u64,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.alpha > 1.0) {
            return Err(CoreError::Config(format!(
                "alpha must be > 1 (got {}); the membership update exponent 2/(alpha-1) is singular at 1",
                self.alpha
            )));
        }
        if self.m == 0 {
            return Err(CoreError::Config("m must be positive".into()));
        }
        if self.r == 0 {
            return Err(CoreError::Config("r must be positive".into()));
        }
        for (name, v) in [("eta", self.eta), ("eta1", self.eta1), ("eta2", self.eta2)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(CoreError::Config(format!(
                    "{name} must lie in (0, 1], got {v}"
                )));
            }
        }
        if self.eta2 > self.eta1 {
            return Err(CoreError::Config(format!(
                "eta2 ({}) must not exceed eta1 ({})",
                self.eta2, self.eta1
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(CoreError::Config(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            m: 1000,
            r: 200,
            eta: 0.1,
            eta1: 0.1,
            eta2: 0.1,
            delta: 0.05,
            seed: 0,
        }
    }
}

// ---------------------------------------------------------------------------
// operations
// ---------------------------------------------------------------------------

/// The fuzzy k-means objective `sum_i sum_j U[i][j]^alpha * ||x_i - mu_j||^2`.
pub fn fuzzy_objective(x: &Dataset, p: &Clustering, alpha: f64) -> Result<f64, CoreError> {
    check_shapes(x, p)?;
    let mut total = 0.0;
    for (i, point) in x.points().iter().enumerate() {
        for (j, center) in p.centers().iter().enumerate() {
            total += p.memberships().get(i, j).powf(alpha) * squared_distance(point, center);
        }
    }
    Ok(total)
}

fn check_shapes(x: &Dataset, p: &Clustering) -> Result<(), CoreError> {
    if p.dim() != x.dim() {
        return Err(CoreError::Shape(format!(
            "centers have dimension {}, dataset has {}",
            p.dim(),
            x.dim()
        )));
    }
    if p.memberships().n() != x.len() {
        return Err(CoreError::Shape(format!(
            "membership matrix has {} rows, dataset has {} points",
            p.memberships().n(),
            x.len()
        )));
    }
    Ok(())
}

/// Optimal membership row for one point given fixed centers.
///
/// If the point coincides with one or more centers (distance below
/// [`COINCIDENCE_TOL`]) the mass is split equally among the coincident
/// centers, the limit of the closed form.
pub fn membership_row(point: &[f64], centers: &[Vec<f64>], alpha: f64) -> Vec<f64> {
    let k = centers.len();
    let dists: Vec<f64> = centers.iter().map(|c| distance(point, c)).collect();
    let coincident: Vec<usize> = (0..k).filter(|&j| dists[j] < COINCIDENCE_TOL).collect();
    if !coincident.is_empty() {
        let mut row = vec![0.0; k];
        let share = 1.0 / coincident.len() as f64;
        for j in coincident {
            row[j] = share;
        }
        return row;
    }
    // U[i][j] = [ sum_l (d_j / d_l)^(2/(alpha-1)) ]^(-1), computed in the
    // algebraically equal form w_j / sum(w) with w_j = (d_min / d_j)^p so the
    // intermediate weights stay in (0, 1].
    let p = 2.0 / (alpha - 1.0);
    let d_min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = dists.iter().map(|&d| (d_min / d).powf(p)).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Optimal memberships given fixed centers (row-wise closed form).
pub fn update_memberships(
    x: &Dataset,
    centers: &[Vec<f64>],
    alpha: f64,
) -> Result<MembershipMatrix, CoreError> {
    if !(alpha > 1.0) {
        return Err(CoreError::Config(format!("alpha must be > 1, got {alpha}")));
    }
    if centers.is_empty() {
        return Err(CoreError::Shape("need at least one center".into()));
    }
    if centers.iter().any(|c| c.len() != x.dim()) {
        return Err(CoreError::Shape(
            "center dimension does not match dataset".into(),
        ));
    }
    let rows = x
        .points()
        .iter()
        .map(|p| membership_row(p, centers, alpha))
        .collect();
    MembershipMatrix::new(rows)
}

/// Optimal centers given fixed memberships: `mu_j = sum_i U[i][j]^alpha x_i / sum_i U[i][j]^alpha`.
pub fn update_centers(
    x: &Dataset,
    u: &MembershipMatrix,
    alpha: f64,
) -> Result<Vec<Vec<f64>>, CoreError> {
    if u.n() != x.len() {
        return Err(CoreError::Shape(format!(
            "membership matrix has {} rows, dataset has {} points",
            u.n(),
            x.len()
        )));
    }
    let (d, k) = (x.dim(), u.k());
    let mut centers = vec![vec![0.0; d]; k];
    let mut masses = vec![0.0; k];
    for (i, point) in x.points().iter().enumerate() {
        for j in 0..k {
            let w = u.get(i, j).powf(alpha);
            masses[j] += w;
            for (c, &coord) in centers[j].iter_mut().zip(point) {
                *c += w * coord;
            }
        }
    }
    for j in 0..k {
        if masses[j] <= 0.0 {
            return Err(CoreError::DegenerateCluster(j));
        }
        for c in centers[j].iter_mut() {
            *c /= masses[j];
        }
    }
    Ok(centers)
}

/// How to seed the alternating minimization.
#[derive(Debug, Clone)]
pub enum LloydInit {
    /// Explicit seed centers.
    Centers(Vec<Vec<f64>>),
    /// Draw `k` distinct data points as seed centers.
    Seed(u64),
}

#[derive(Debug, Clone)]
pub struct LloydOutcome {
    pub clustering: Clustering,
    /// Objective after each iteration; non-increasing.
    pub objective_trace: Vec<f64>,
    /// Number of degenerate clusters repaired by reseeding to a random point.
    pub reseeds: usize,
    pub iterations: usize,
}

/// Alternating minimization from seed centers until the objective decrease
/// drops below `tol` or `max_iter` is reached.
///
/// The returned pair is consistent by construction: memberships are the exact
/// closed form for the final centers, and the centers are the weighted means
/// of the previous memberships (equal to within the convergence tolerance).
pub fn lloyd_fuzzy(
    x: &Dataset,
    k: usize,
    alpha: f64,
    init: LloydInit,
    max_iter: usize,
    tol: f64,
) -> Result<LloydOutcome, CoreError> {
    if k == 0 || k > x.len() {
        return Err(CoreError::Config(format!(
            "k must lie in [1, n]; got k={k} with n={}",
            x.len()
        )));
    }
    use rand::SeedableRng;
    let mut reseed_rng = match &init {
        LloydInit::Seed(seed) => ChaCha8Rng::seed_from_u64(*seed),
        LloydInit::Centers(_) => ChaCha8Rng::seed_from_u64(0x1105),
    };
    let mut centers = match init {
        LloydInit::Centers(c) => {
            if c.len() != k {
                return Err(CoreError::Shape(format!(
                    "init has {} centers, expected {k}",
                    c.len()
                )));
            }
            if c.iter().any(|v| v.len() != x.dim()) {
                return Err(CoreError::Shape("init center dimension mismatch".into()));
            }
            c
        }
        LloydInit::Seed(_) => {
            let mut picked = Vec::with_capacity(k);
            while picked.len() < k {
                let i = reseed_rng.random_range(0..x.len());
                if !picked.contains(&i) {
                    picked.push(i);
                }
            }
            picked.iter().map(|&i| x.point(i).to_vec()).collect()
        }
    };

    let mut reseeds = 0usize;
    let mut trace = Vec::new();
    let mut memberships = update_memberships(x, &centers, alpha)?;
    let mut prev_obj = f64::INFINITY;
    let mut iterations = 0usize;
    for _ in 0..max_iter {
        iterations += 1;
        match update_centers(x, &memberships, alpha) {
            Ok(c) => centers = c,
            Err(CoreError::DegenerateCluster(j)) => {
                // reseed the dead cluster to a random data point and continue
                reseeds += 1;
                let i = reseed_rng.random_range(0..x.len());
                centers[j] = x.point(i).to_vec();
            }
            Err(e) => return Err(e),
        }
        memberships = update_memberships(x, &centers, alpha)?;
        let obj = objective_of(x, &centers, &memberships, alpha);
        trace.push(obj);
        if prev_obj - obj < tol {
            break;
        }
        prev_obj = obj;
    }
    let clustering = Clustering::new(centers, memberships)?;
    Ok(LloydOutcome {
        clustering,
        objective_trace: trace,
        reseeds,
        iterations,
    })
}

fn objective_of(x: &Dataset, centers: &[Vec<f64>], u: &MembershipMatrix, alpha: f64) -> f64 {
    let mut total = 0.0;
    for (i, point) in x.points().iter().enumerate() {
        for (j, center) in centers.iter().enumerate() {
            total += u.get(i, j).powf(alpha) * squared_distance(point, center);
        }
    }
    total
}

/// Xie–Beni validity index: objective divided by `n * k * min_{i!=j} ||mu_i - mu_j||^2`.
pub fn xie_beni(x: &Dataset, p: &Clustering, alpha: f64) -> Result<f64, CoreError> {
    if p.k() < 2 {
        return Err(CoreError::Config(
            "the validity index needs at least two centers".into(),
        ));
    }
    let mut min_sep = f64::INFINITY;
    for i in 0..p.k() {
        for j in (i + 1)..p.k() {
            min_sep = min_sep.min(squared_distance(&p.centers()[i], &p.centers()[j]));
        }
    }
    if min_sep <= 0.0 {
        return Err(CoreError::CoincidentCenters);
    }
    let obj = fuzzy_objective(x, p, alpha)?;
    Ok(obj / (x.len() as f64 * p.k() as f64 * min_sep))
}

/// `k/n` times the smallest column mass of `U`; always in `(0, 1]` for valid memberships.
pub fn beta_of(u: &MembershipMatrix) -> f64 {
    let min_mass = (0..u.k())
        .map(|j| u.column_sum(j))
        .fold(f64::INFINITY, f64::min);
    u.k() as f64 / u.n() as f64 * min_mass
}

/// Permutation of `0..n` sorting the dataset by ascending distance from `v`;
/// exact distance ties break by ascending original index.
pub fn sort_by_distance(x: &Dataset, v: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    let d2: Vec<f64> = x.points().iter().map(|p| squared_distance(p, v)).collect();
    order.sort_by(|&a, &b| d2[a].partial_cmp(&d2[b]).unwrap().then(a.cmp(&b)));
    order
}

/// Largest radius `g` such that moving any center within distance `g` cannot
/// change its distance-sorted order of the dataset.
///
/// For a center `mu` and points `a`, `b` with `||mu - a|| < ||mu - b||`, the
/// order of the pair survives any perturbation smaller than the distance from
/// `mu` to their perpendicular-bisector hyperplane,
/// `(||b - mu||^2 - ||a - mu||^2) / (2 ||b - a||)`; the minimum over
/// consecutive pairs in sorted order equals the minimum over all pairs.
/// Exact distance ties (or duplicate points) make the radius 0; a single
/// point imposes no constraint, so `n == 1` returns infinity.
pub fn gamma_of(x: &Dataset, centers: &[Vec<f64>]) -> f64 {
    if x.len() == 1 {
        return f64::INFINITY;
    }
    let mut gamma = f64::INFINITY;
    for mu in centers {
        let order = sort_by_distance(x, mu);
        for w in order.windows(2) {
            let (a, b) = (x.point(w[0]), x.point(w[1]));
            let da2 = squared_distance(a, mu);
            let db2 = squared_distance(b, mu);
            let gap = distance(a, b);
            if db2 <= da2 || gap == 0.0 {
                // tied ordering (or duplicate point): no positive radius exists
                return 0.0;
            }
            gamma = gamma.min((db2 - da2) / (2.0 * gap));
        }
    }
    gamma
}

/// A single failed consistency condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConsistencyViolation {
    /// `||mu_j - weighted_mean_j||` exceeded the tolerance.
    Center { cluster: usize, deviation: f64 },
    /// A closer point has strictly smaller membership than a farther one.
    Monotonicity {
        closer: usize,
        farther: usize,
        cluster: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub consistent: bool,
    pub violations: Vec<ConsistencyViolation>,
}

/// Checks whether `p` is a consistent center-based clustering at tolerance `tol`:
/// (a) each center equals the membership-weighted mean of the data, and
/// (b) along the distance-sorted order from each center, memberships are
/// non-increasing.
pub fn is_consistent_center_based(
    x: &Dataset,
    p: &Clustering,
    alpha: f64,
    tol: f64,
) -> ConsistencyReport {
    let mut violations = Vec::new();
    if let Ok(recomputed) = update_centers(x, p.memberships(), alpha) {
        for (j, (have, want)) in p.centers().iter().zip(&recomputed).enumerate() {
            let dev = distance(have, want);
            if dev > tol {
                violations.push(ConsistencyViolation::Center {
                    cluster: j,
                    deviation: dev,
                });
            }
        }
    } else {
        // a zero-mass column cannot be a weighted mean of anything
        violations.push(ConsistencyViolation::Center {
            cluster: usize::MAX,
            deviation: f64::INFINITY,
        });
    }
    for (j, mu) in p.centers().iter().enumerate() {
        let order = sort_by_distance(x, mu);
        for w in order.windows(2) {
            let (near, far) = (w[0], w[1]);
            if p.memberships().get(near, j) < p.memberships().get(far, j) - tol {
                violations.push(ConsistencyViolation::Monotonicity {
                    closer: near,
                    farther: far,
                    cluster: j,
                });
            }
        }
    }
    ConsistencyReport {
        consistent: violations.is_empty(),
        violations,
    }
}

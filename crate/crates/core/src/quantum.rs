//! Dense complex linear algebra at small fixed dimension: states,
//! measurement banks, tensor products, and Born-rule probabilities.
//!
//! Everything here is immutable after construction and safe to share
//! across threads.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Tolerance for structural invariants (hermiticity, unit trace, projector sums).
pub const STRUCTURAL_TOL: f64 = 1e-12;
/// Tolerance for composite numerical claims (probability normalization, scores).
pub const NUMERIC_TOL: f64 = 1e-10;
/// Slack allowed on the smallest eigenvalue of a state operator.
pub const PSD_TOL: f64 = 1e-10;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
}

fn is_hermitian(m: &CMatrix, tol: f64) -> bool {
    (m - m.adjoint()).iter().all(|e| e.norm() <= tol)
}

/// Real eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut eig: Vec<f64> = m
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    eig
}

/// A density operator on a Hilbert space of dimension `dim`.
///
/// Valid operators are Hermitian with unit trace and non-negative spectrum
/// (within [`STRUCTURAL_TOL`] / [`PSD_TOL`]).
#[derive(Debug, Clone, PartialEq)]
pub struct StateOperator {
    dim: usize,
    matrix: CMatrix,
}

impl StateOperator {
    /// Validates the state invariants and wraps the matrix.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let dim = matrix.nrows();
        if matrix.ncols() != dim || dim == 0 {
            return Err(Error::DimensionMismatch(format!(
                "state operator must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if !is_hermitian(&matrix, STRUCTURAL_TOL) {
            return Err(Error::InvalidParameter(
                "state operator is not Hermitian".into(),
            ));
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > STRUCTURAL_TOL || trace.im.abs() > STRUCTURAL_TOL {
            return Err(Error::InvalidParameter(format!(
                "state operator trace is {trace}, expected 1"
            )));
        }
        let min_eig = hermitian_eigenvalues(&matrix)
            .first()
            .copied()
            .unwrap_or(0.0);
        if min_eig < -PSD_TOL {
            return Err(Error::InvalidParameter(format!(
                "state operator has negative eigenvalue {min_eig}"
            )));
        }
        Ok(Self { dim, matrix })
    }

    /// Construction path for operators that are valid by algebra
    /// (tensor products and convex mixtures of validated states).
    fn from_valid(matrix: CMatrix) -> Self {
        let dim = matrix.nrows();
        Self { dim, matrix }
    }

    /// Rank-1 projector |ket⟩⟨ket| from a normalized vector.
    pub fn pure(ket: &CVector) -> Result<Self> {
        let norm = ket.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "ket norm is {norm}, expected 1"
            )));
        }
        let m = ket * ket.adjoint();
        Ok(Self::from_valid(m))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self::from_valid(identity(dim) / c(dim as f64))
    }

    /// `v * self + (1 - v) * I/dim`.
    pub fn with_white_noise(&self, v: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!(
                "visibility {v} outside [0, 1]"
            )));
        }
        let m = &self.matrix * c(v) + identity(self.dim) * c((1.0 - v) / self.dim as f64);
        Ok(Self::from_valid(m))
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self::from_valid(self.matrix.kronecker(&other.matrix))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// Tr(rho^2).
    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    /// Partial trace of a bipartite state with subsystem dims `dim_a * dim_b`.
    /// Keeps the first subsystem when `keep_first`, else the second.
    pub fn partial_trace_bipartite(
        &self,
        dim_a: usize,
        dim_b: usize,
        keep_first: bool,
    ) -> Result<Self> {
        if dim_a * dim_b != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "subsystem dims {dim_a}x{dim_b} do not factor dimension {}",
                self.dim
            )));
        }
        let kept = if keep_first { dim_a } else { dim_b };
        let mut out = CMatrix::zeros(kept, kept);
        for i in 0..kept {
            for j in 0..kept {
                let mut acc = Complex64::new(0.0, 0.0);
                let traced = if keep_first { dim_b } else { dim_a };
                for t in 0..traced {
                    let (row, col) = if keep_first {
                        (i * dim_b + t, j * dim_b + t)
                    } else {
                        (t * dim_b + i, t * dim_b + j)
                    };
                    acc += self.matrix[(row, col)];
                }
                out[(i, j)] = acc;
            }
        }
        Ok(Self::from_valid(out))
    }

    /// Random density operator: `G G† / Tr(G G†)` with complex Gaussian `G`.
    pub fn random<R: rand::Rng>(dim: usize, rng: &mut R) -> Self {
        // Box-Muller; avoids ln(0) by shifting the open interval.
        let gauss = |rng: &mut R| {
            let u1: f64 = 1.0 - rng.random::<f64>();
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        };
        let g = CMatrix::from_fn(dim, dim, |_, _| Complex64::new(gauss(rng), gauss(rng)));
        let m = &g * g.adjoint();
        let tr = m.trace().re;
        Self::from_valid(m / c(tr))
    }
}

/// |psi-> = (|01> - |10>)/sqrt(2).
pub fn singlet() -> StateOperator {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let ket = CVector::from_vec(vec![c(0.0), c(s), c(-s), c(0.0)]);
    StateOperator::pure(&ket).expect("singlet ket is normalized")
}

/// |phi-> = (|00> - |11>)/sqrt(2).
pub fn bell_phi_minus() -> StateOperator {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let ket = CVector::from_vec(vec![c(s), c(0.0), c(0.0), c(-s)]);
    StateOperator::pure(&ket).expect("bell ket is normalized")
}

/// |phi+> = (|00> + |11>)/sqrt(2).
///
/// The repeater chain is built on this state: Bell measurements on it
/// compose without a parity offset, so one fixed outcome-label table
/// reproduces the closed-form chain correlations at every length.
pub fn bell_phi_plus() -> StateOperator {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let ket = CVector::from_vec(vec![c(s), c(0.0), c(0.0), c(s)]);
    StateOperator::pure(&ket).expect("bell ket is normalized")
}

/// `v |phi-><phi-| + (1 - v) I/4`; rejects visibility outside [0, 1].
pub fn noisy_bell(v: f64) -> Result<StateOperator> {
    bell_phi_minus().with_white_noise(v)
}

/// One measurement setting: a complete set of orthogonal projectors,
/// indexed by outcome label.
#[derive(Debug, Clone)]
pub struct MeasurementSetting {
    projectors: Vec<CMatrix>,
    /// Present when every projector is rank one; kets[o] spans projectors[o].
    kets: Option<Vec<CVector>>,
    dim: usize,
}

impl MeasurementSetting {
    /// Validates that the projectors are Hermitian, idempotent, and sum to identity.
    pub fn new(projectors: Vec<CMatrix>) -> Result<Self> {
        let dim = projectors.first().map(|p| p.nrows()).ok_or_else(|| {
            Error::InvalidParameter("measurement setting needs at least one projector".into())
        })?;
        let mut sum = CMatrix::zeros(dim, dim);
        for p in &projectors {
            if p.nrows() != dim || p.ncols() != dim {
                return Err(Error::DimensionMismatch(
                    "projectors in a setting must share one dimension".into(),
                ));
            }
            if !is_hermitian(p, STRUCTURAL_TOL) {
                return Err(Error::InvalidParameter("projector is not Hermitian".into()));
            }
            if (p * p - p).iter().any(|e| e.norm() > STRUCTURAL_TOL) {
                return Err(Error::InvalidParameter(
                    "projector is not idempotent".into(),
                ));
            }
            sum += p;
        }
        if (&sum - identity(dim))
            .iter()
            .any(|e| e.norm() > STRUCTURAL_TOL)
        {
            return Err(Error::InvalidParameter(
                "projectors do not sum to the identity".into(),
            ));
        }
        Ok(Self {
            projectors,
            kets: None,
            dim,
        })
    }

    /// Builds a setting from an orthonormal basis; outcome `o` is the
    /// projector onto `kets[o]`.
    pub fn from_basis(kets: Vec<CVector>) -> Result<Self> {
        let projectors: Vec<CMatrix> = kets.iter().map(|k| k * k.adjoint()).collect();
        let mut setting = Self::new(projectors)?;
        setting.kets = Some(kets);
        Ok(setting)
    }

    pub fn outcomes(&self) -> usize {
        self.projectors.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn projector(&self, outcome: usize) -> &CMatrix {
        &self.projectors[outcome]
    }

    pub fn kets(&self) -> Option<&[CVector]> {
        self.kets.as_deref()
    }
}

/// Qubit basis {cos t |0> + sin t |1>, -sin t |0> + cos t |1>};
/// outcome 0 is the first basis vector.
pub fn qubit_basis(theta: f64) -> MeasurementSetting {
    let (s, co) = theta.sin_cos();
    let v0 = CVector::from_vec(vec![c(co), c(s)]);
    let v1 = CVector::from_vec(vec![c(-s), c(co)]);
    MeasurementSetting::from_basis(vec![v0, v1]).expect("rotated qubit basis is orthonormal")
}

/// Qubit basis rotated by `r * pi / (2k)`; requires `k >= 2`.
pub fn rotated_basis(r: i64, k: usize) -> Result<MeasurementSetting> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "rotated basis needs k >= 2 settings, got {k}"
        )));
    }
    Ok(qubit_basis(
        r as f64 * std::f64::consts::PI / (2.0 * k as f64),
    ))
}

/// Measurements available to one agent, one setting per input value.
#[derive(Debug, Clone)]
pub struct MeasurementBank {
    settings: Vec<MeasurementSetting>,
}

impl MeasurementBank {
    pub fn new(settings: Vec<MeasurementSetting>) -> Result<Self> {
        if settings.is_empty() {
            return Err(Error::InvalidParameter(
                "measurement bank needs at least one setting".into(),
            ));
        }
        let dim = settings[0].dim();
        let outcomes = settings[0].outcomes();
        if settings
            .iter()
            .any(|s| s.dim() != dim || s.outcomes() != outcomes)
        {
            return Err(Error::DimensionMismatch(
                "all settings in a bank must share one dimension and outcome count".into(),
            ));
        }
        Ok(Self { settings })
    }

    pub fn settings(&self) -> usize {
        self.settings.len()
    }

    pub fn setting(&self, input: usize) -> &MeasurementSetting {
        &self.settings[input]
    }

    pub fn dim(&self) -> usize {
        self.settings[0].dim()
    }

    pub fn outcomes(&self) -> usize {
        self.settings[0].outcomes()
    }

    /// Bank of `k` rotated qubit bases at `x * pi / (2k)`, one per input `x`.
    pub fn rotated(k: usize) -> Result<Self> {
        let settings = (0..k as i64)
            .map(|r| rotated_basis(r, k))
            .collect::<Result<_>>()?;
        Self::new(settings)
    }

    /// Bank of `k` qubit bases offset half a step between the rotated grid
    /// points: angle `(2y + 1) * pi / (4k)` for input `y`.
    pub fn rotated_half_step(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!(
                "rotated bank needs k >= 2 settings, got {k}"
            )));
        }
        let settings = (0..k)
            .map(|y| qubit_basis((2 * y + 1) as f64 * std::f64::consts::PI / (4.0 * k as f64)))
            .collect();
        Self::new(settings)
    }

    /// Half-step bank with the outcome labels swapped (basis angle shifted by
    /// pi/2), so paired correlators come out positive.
    pub fn rotated_half_step_flipped(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!(
                "rotated bank needs k >= 2 settings, got {k}"
            )));
        }
        let settings = (0..k)
            .map(|y| {
                qubit_basis(
                    (2 * y + 1) as f64 * std::f64::consts::PI / (4.0 * k as f64)
                        + std::f64::consts::FRAC_PI_2,
                )
            })
            .collect();
        Self::new(settings)
    }

    /// Two-setting bank measuring `(sigma_z + sigma_x)/sqrt(2)` for input 0
    /// and `(sigma_z - sigma_x)/sqrt(2)` for input 1; outcome 0 is the +1
    /// eigenvector.
    pub fn diagonal_observables() -> Self {
        let settings = vec![
            qubit_basis(std::f64::consts::FRAC_PI_8),
            qubit_basis(-std::f64::consts::FRAC_PI_8),
        ];
        Self::new(settings).expect("qubit bases share dimension 2")
    }

    /// Single-setting joint measurement in the Bell basis.
    ///
    /// The outcome index encodes the two reported bits as `(a0 << 1) | a1`
    /// with the frozen label table
    ///
    /// | outcome | bits a0 a1 | basis vector            |
    /// |---------|------------|-------------------------|
    /// | 0       | 0 0        | (|00> + |11>)/sqrt(2)   |
    /// | 1       | 0 1        | (|00> - |11>)/sqrt(2)   |
    /// | 2       | 1 0        | (|01> + |10>)/sqrt(2)   |
    /// | 3       | 1 1        | (|01> - |10>)/sqrt(2)   |
    pub fn bell_basis() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let kets = vec![
            CVector::from_vec(vec![c(s), c(0.0), c(0.0), c(s)]),
            CVector::from_vec(vec![c(s), c(0.0), c(0.0), c(-s)]),
            CVector::from_vec(vec![c(0.0), c(s), c(s), c(0.0)]),
            CVector::from_vec(vec![c(0.0), c(s), c(-s), c(0.0)]),
        ];
        let setting = MeasurementSetting::from_basis(kets).expect("Bell basis is orthonormal");
        Self::new(vec![setting]).expect("single setting")
    }
}

/// Kronecker product of a list of matrices in order.
pub fn kron_all(parts: &[&CMatrix]) -> CMatrix {
    let mut acc = CMatrix::identity(1, 1);
    for p in parts {
        acc = acc.kronecker(p);
    }
    acc
}

/// Born probability `Tr(rho (P_1 x ... x P_m))` for one outcome per agent,
/// clipped to [0, 1].
pub fn born(
    state: &StateOperator,
    settings: &[&MeasurementSetting],
    outcomes: &[usize],
) -> Result<f64> {
    if settings.len() != outcomes.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} settings but {} outcomes",
            settings.len(),
            outcomes.len()
        )));
    }
    let joint_dim: usize = settings.iter().map(|s| s.dim()).product();
    if joint_dim != state.dim() {
        return Err(Error::DimensionMismatch(format!(
            "settings act on dimension {joint_dim}, state has dimension {}",
            state.dim()
        )));
    }
    for (s, &o) in settings.iter().zip(outcomes) {
        if o >= s.outcomes() {
            return Err(Error::InvalidParameter(format!(
                "outcome {o} out of range for a {}-outcome setting",
                s.outcomes()
            )));
        }
    }
    let parts: Vec<&CMatrix> = settings
        .iter()
        .zip(outcomes)
        .map(|(s, &o)| s.projector(o))
        .collect();
    let joint = kron_all(&parts);
    // Tr(A B) as an entrywise sum; both operands are Hermitian.
    let mut tr = 0.0;
    for i in 0..state.dim() {
        for j in 0..state.dim() {
            tr += (state.matrix()[(i, j)] * joint[(j, i)]).re;
        }
    }
    if tr < -PSD_TOL {
        return Err(Error::InvalidParameter(format!(
            "Born probability {tr} below zero beyond tolerance"
        )));
    }
    Ok(tr.clamp(0.0, 1.0))
}

/// Probabilities of every joint outcome of one setting per agent, in
/// mixed-radix order with the first agent most significant.
pub fn born_distribution(
    state: &StateOperator,
    settings: &[&MeasurementSetting],
) -> Result<Vec<f64>> {
    let radices: Vec<usize> = settings.iter().map(|s| s.outcomes()).collect();
    let total: usize = radices.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut outcomes = vec![0usize; settings.len()];
    for flat in 0..total {
        // Decode mixed-radix with first agent most significant.
        let mut rem = flat;
        for idx in (0..settings.len()).rev() {
            outcomes[idx] = rem % radices[idx];
            rem /= radices[idx];
        }
        out.push(born(state, settings, &outcomes)?);
    }
    Ok(out)
}

/// `Tr(rho (A x B))` for two ±1-valued observables.
pub fn correlator(state: &StateOperator, a: &CMatrix, b: &CMatrix) -> Result<f64> {
    let joint = a.kronecker(b);
    if joint.nrows() != state.dim() {
        return Err(Error::DimensionMismatch(format!(
            "observables act on dimension {}, state has dimension {}",
            joint.nrows(),
            state.dim()
        )));
    }
    Ok((state.matrix() * joint).trace().re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    #[test]
    fn singlet_is_pure_unit_trace() {
        let s = singlet();
        assert!((s.trace() - 1.0).abs() < 1e-12);
        assert!((s.purity() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singlet_anticorrelates_in_z_basis() {
        let s = singlet();
        let z = qubit_basis(0.0);
        let probs = born_distribution(&s, &[&z, &z]).unwrap();
        let expected = [0.0, 0.5, 0.5, 0.0];
        for (p, e) in probs.iter().zip(expected) {
            assert!((p - e).abs() < 1e-12, "got {probs:?}");
        }
    }

    #[test]
    fn singlet_marginals_are_maximally_mixed() {
        let s = singlet();
        for keep_first in [true, false] {
            let reduced = s.partial_trace_bipartite(2, 2, keep_first).unwrap();
            let half = StateOperator::maximally_mixed(2);
            let diff = reduced.matrix() - half.matrix();
            assert!(diff.iter().all(|e| e.norm() < 1e-12));
        }
    }

    #[test]
    fn noisy_bell_limits() {
        let white = noisy_bell(0.0).unwrap();
        let z = qubit_basis(0.3);
        let w = qubit_basis(1.1);
        for p in born_distribution(&white, &[&z, &w]).unwrap() {
            assert!((p - 0.25).abs() < 1e-12);
        }
        let pure = noisy_bell(1.0).unwrap();
        assert!((pure.purity() - 1.0).abs() < 1e-12);
        assert!(noisy_bell(-0.1).is_err());
        assert!(noisy_bell(1.1).is_err());
    }

    #[test]
    fn noisy_bell_half_visibility_spectrum() {
        // Oracle: direct eigendecomposition of v*phi- + (1-v)I/4 at v = 1/2.
        let eigs = noisy_bell(0.5).unwrap().eigenvalues();
        let expected = [0.125, 0.125, 0.125, 0.625];
        for (e, x) in eigs.iter().zip(expected) {
            assert!((e - x).abs() < 1e-12, "eigenvalues {eigs:?}");
        }
    }

    #[test]
    fn rotated_basis_limits() {
        assert!(rotated_basis(0, 1).is_err());

        // r = 0 is the computational basis.
        let b = rotated_basis(0, 4).unwrap();
        assert!((b.projector(0)[(0, 0)].re - 1.0).abs() < 1e-12);
        assert!(b.projector(0)[(1, 1)].norm() < 1e-12);

        // r = k rotates by pi/2: outcome 0 lands on the r = 0 outcome-1 projector.
        let k = 5;
        let quarter = rotated_basis(k as i64, k).unwrap();
        let base = rotated_basis(0, k).unwrap();
        let diff = quarter.projector(0) - base.projector(1);
        assert!(diff.iter().all(|e| e.norm() < 1e-12));
    }

    #[test]
    fn rotated_basis_half_angle_entries() {
        // Oracle: trig evaluation at r = 1, k = 2 (angle pi/4) gives +-1/2 entries.
        let b = rotated_basis(1, 2).unwrap();
        for p in [b.projector(0), b.projector(1)] {
            for e in p.iter() {
                assert!((e.re.abs() - 0.5).abs() < 1e-12);
                assert!(e.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bell_basis_is_complete_and_orthogonal() {
        let bank = MeasurementBank::bell_basis();
        let setting = bank.setting(0);
        let mut sum = CMatrix::zeros(4, 4);
        for o in 0..4 {
            sum += setting.projector(o);
        }
        assert!((sum - identity(4)).iter().all(|e| e.norm() < 1e-12));
        for a in 0..4 {
            for b in 0..4 {
                if a != b {
                    let prod = setting.projector(a) * setting.projector(b);
                    assert!(prod.iter().all(|e| e.norm() < 1e-12));
                }
            }
        }
    }

    #[test]
    fn born_identity_measurement_is_certain() {
        let s = singlet();
        let trivial = MeasurementSetting::new(vec![identity(4)]).unwrap();
        assert!((born(&s, &[&trivial], &[0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn born_rejects_dimension_mismatch() {
        let s = singlet();
        let z = qubit_basis(0.0);
        assert!(born(&s, &[&z], &[0]).is_err());
        assert!(born(&s, &[&z, &z, &z], &[0, 0, 0]).is_err());
    }

    #[test]
    fn diagonal_observable_correlator_against_z() {
        // Oracle: direct matrix computation of Tr(rho (sz+sx)/sqrt(2) x sz).
        let obs_a = (pauli_z() + pauli_x()) / Complex64::new(std::f64::consts::SQRT_2, 0.0);
        let got = correlator(&singlet(), &obs_a, &pauli_z()).unwrap();
        assert!((got + FRAC_1_SQRT_2).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn singlet_planar_correlator_matches_cosine_law() {
        // <a.sigma x b.sigma> on the singlet is -cos(theta_a - theta_b) for
        // Bloch angles in the x-z plane; measurement bases at half the Bloch
        // angle reproduce it through outcome signs.
        let s = singlet();
        for i in 0..6 {
            for j in 0..6 {
                let ta = i as f64 * PI / 3.0 + 0.1;
                let tb = j as f64 * PI / 7.0;
                let ba = qubit_basis(ta / 2.0);
                let bb = qubit_basis(tb / 2.0);
                let mut e = 0.0;
                for (oa, ob, sign) in [(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 1.0)] {
                    e += sign * born(&s, &[&ba, &bb], &[oa, ob]).unwrap();
                }
                assert!((e + (ta - tb).cos()).abs() < 1e-10, "angles {ta} {tb}: {e}");
            }
        }
    }

    #[test]
    fn born_distribution_normalized_for_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ba = rotated_basis(1, 3).unwrap();
        let bb = rotated_basis(3, 5).unwrap();
        for _ in 0..1000 {
            let rho = StateOperator::random(4, &mut rng);
            let sum: f64 = born_distribution(&rho, &[&ba, &bb]).unwrap().iter().sum();
            assert!((sum - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn random_states_pass_constructor_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let rho = StateOperator::random(4, &mut rng);
            assert!(StateOperator::new(rho.matrix().clone()).is_ok());
        }
        assert!(StateOperator::new(identity(2)).is_err()); // trace 2
        assert!(StateOperator::new(pauli_x()).is_err()); // trace 0
    }
}

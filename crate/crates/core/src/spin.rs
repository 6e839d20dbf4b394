//! Spin-1/2 algebra: Bloch-vector observables, the closed-form spin-spin
//! interaction unitary, the position-conditioned interaction operator, and
//! site-localized operations on a (site x spin) state.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::qmath::{identity, kron, CMatrix, DensityOperator};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
}

/// Projector |k><k| in the computational basis of dimension `d`.
pub fn basis_projector(d: usize, k: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    m[(k, k)] = c(1., 0.);
    m
}

/// A traceless Hermitian involution s.sigma defined by a unit Bloch vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinObservable {
    bloch: [f64; 3],
}

impl SpinObservable {
    pub fn new(bloch: [f64; 3]) -> Result<Self> {
        let n = (bloch[0].powi(2) + bloch[1].powi(2) + bloch[2].powi(2)).sqrt();
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "observable direction has norm {n}, expected 1"
            )));
        }
        Ok(Self { bloch })
    }

    /// Normalizes a nonzero direction.
    pub fn from_direction(v: [f64; 3]) -> Result<Self> {
        let n = (v[0].powi(2) + v[1].powi(2) + v[2].powi(2)).sqrt();
        if n < 1e-12 {
            return Err(Error::InvalidArgument("zero direction".into()));
        }
        Ok(Self {
            bloch: [v[0] / n, v[1] / n, v[2] / n],
        })
    }

    pub const fn x() -> Self {
        Self { bloch: [1., 0., 0.] }
    }

    pub const fn z() -> Self {
        Self { bloch: [0., 0., 1.] }
    }

    /// Uniform direction on the Bloch sphere (uniform in cos(polar) and azimuth).
    pub fn random(rng: &mut impl Rng) -> Self {
        let cos_t: f64 = rng.gen_range(-1.0..=1.0);
        let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
        let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        Self {
            bloch: [sin_t * phi.cos(), sin_t * phi.sin(), cos_t],
        }
    }

    pub fn bloch(&self) -> [f64; 3] {
        self.bloch
    }

    /// 2x2 matrix form s_x sigma_x + s_y sigma_y + s_z sigma_z.
    pub fn matrix(&self) -> CMatrix {
        let [sx, sy, sz] = self.bloch;
        CMatrix::from_row_slice(
            2,
            2,
            &[c(sz, 0.), c(sx, -sy), c(sx, sy), c(-sz, 0.)],
        )
    }
}

/// A random qubit state: uniform Bloch direction with norm uniform in
/// [0, max_norm]. max_norm < 1 keeps the state full rank, so it is almost
/// surely not an eigenstate of any coupling observable.
pub fn random_qubit_state(rng: &mut impl Rng, max_norm: f64) -> DensityOperator {
    let dir = SpinObservable::random(rng).bloch();
    let r: f64 = rng.gen_range(0.0..=max_norm);
    DensityOperator::from_bloch([dir[0] * r, dir[1] * r, dir[2] * r]).expect("norm <= 1")
}

/// One spin-spin interaction: theta = integral of the coupling profile, plus
/// the system and environment observables it couples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingSpec {
    pub theta: f64,
    pub sys_obs: SpinObservable,
    pub env_obs: SpinObservable,
}

impl CouplingSpec {
    pub fn new(theta: f64, sys_obs: SpinObservable, env_obs: SpinObservable) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::InvalidArgument(format!("theta = {theta}")));
        }
        Ok(Self {
            theta: canonicalize_angle(theta),
            sys_obs,
            env_obs,
        })
    }

    /// |sin theta| below this is a null coupling (no decoherence).
    pub fn is_null(&self) -> bool {
        self.theta.sin().abs() < 1e-6
    }
}

/// Wraps an angle into (-pi, pi].
pub fn canonicalize_angle(theta: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut t = theta % tau;
    if t <= -std::f64::consts::PI {
        t += tau;
    } else if t > std::f64::consts::PI {
        t -= tau;
    }
    t
}

/// exp(i theta sigma_S x sigma_E) in closed form.
///
/// (sigma_S x sigma_E)^2 = I, so the exponential collapses to
/// cos(theta) I + i sin(theta) (sigma_S x sigma_E).
pub fn interaction_unitary(cpl: &CouplingSpec) -> CMatrix {
    let ss = kron(&cpl.sys_obs.matrix(), &cpl.env_obs.matrix());
    identity(4).scale(cpl.theta.cos()) + ss.map(|z| z * c(0., cpl.theta.sin()))
}

/// Block operator on (site_S x site_E x spin_S x spin_E): applies `u_int` on
/// the spin factors exactly where both site registers equal `match_site`,
/// identity elsewhere.
pub fn position_conditioned_unitary(d: usize, match_site: usize, u_int: &CMatrix) -> Result<CMatrix> {
    if match_site >= d {
        return Err(Error::InvalidArgument(format!(
            "match_site {match_site} out of range for {d} sites"
        )));
    }
    if u_int.nrows() != 4 || u_int.ncols() != 4 {
        return Err(Error::InvalidArgument("u_int must be 4x4".into()));
    }
    let total = d * d * 4;
    let mut out = identity(total);
    // The (match_site, match_site) diagonal block of the two site registers.
    let base = (match_site * d + match_site) * 4;
    for i in 0..4 {
        for j in 0..4 {
            out[(base + i, base + j)] = u_int[(i, j)];
        }
    }
    Ok(out)
}

/// Payload of a site-localized operation on the internal degree of freedom.
#[derive(Debug, Clone)]
pub enum LocalizedKind {
    Identity,
    /// |site><site| x U + (I - |site><site|) x I.
    Unitary(CMatrix),
    /// Three-outcome instrument: {|site><site| x P+, |site><site| x P-,
    /// (I - |site><site|) x I}.
    Measurement { plus: CMatrix, minus: CMatrix },
}

#[derive(Debug, Clone)]
pub struct LocalizedOp {
    pub site: usize,
    pub kind: LocalizedKind,
}

impl LocalizedOp {
    pub fn new(site: usize, kind: LocalizedKind) -> Result<Self> {
        match &kind {
            LocalizedKind::Identity => {}
            LocalizedKind::Unitary(u) => {
                if u.nrows() != 2 || u.ncols() != 2 {
                    return Err(Error::InvalidArgument("unitary payload must be 2x2".into()));
                }
                if !crate::qmath::approx_eq(&(u.adjoint() * u), &identity(2), 1e-12) {
                    return Err(Error::InvalidArgument(
                        "unitary payload fails U^dagger U = I".into(),
                    ));
                }
            }
            LocalizedKind::Measurement { plus, minus } => {
                if !crate::qmath::approx_eq(&(plus + minus), &identity(2), 1e-12) {
                    return Err(Error::InvalidArgument(
                        "projector pair does not sum to I".into(),
                    ));
                }
            }
        }
        Ok(Self { site, kind })
    }
}

/// Outcome labels for the localized measurement instrument.
pub const OUTCOME_PLUS: &str = "+";
pub const OUTCOME_MINUS: &str = "-";
pub const OUTCOME_ABSENT: &str = "absent";

/// Result of applying a localized operation.
pub enum LocalizedOutput {
    State(DensityOperator),
    /// (probability, post-measurement state, outcome label); zero-probability
    /// branches are omitted.
    Outcomes(Vec<(f64, DensityOperator, String)>),
}

/// Applies a localized operation to a state on (site register x one spin).
pub fn apply_localized(op: &LocalizedOp, rho: &DensityOperator) -> Result<LocalizedOutput> {
    if rho.dims().len() != 2 || rho.dims()[1] != 2 {
        return Err(Error::InvalidArgument(format!(
            "expected dims [d, 2], got {:?}",
            rho.dims()
        )));
    }
    let d = rho.dims()[0];
    if op.site >= d {
        return Err(Error::InvalidArgument(format!(
            "site {} out of range for {d} sites",
            op.site
        )));
    }
    let p_here = basis_projector(d, op.site);
    let p_away = identity(d) - &p_here;
    match &op.kind {
        LocalizedKind::Identity => Ok(LocalizedOutput::State(rho.clone())),
        LocalizedKind::Unitary(u) => {
            let big = kron(&p_here, u) + kron(&p_away, &identity(2));
            let m = &big * rho.matrix() * big.adjoint();
            Ok(LocalizedOutput::State(DensityOperator::new_unchecked(
                rho.dims().to_vec(),
                m,
            )))
        }
        LocalizedKind::Measurement { plus, minus } => {
            let effects = [
                (kron(&p_here, plus), OUTCOME_PLUS),
                (kron(&p_here, minus), OUTCOME_MINUS),
                (kron(&p_away, &identity(2)), OUTCOME_ABSENT),
            ];
            let mut out = Vec::new();
            for (e, label) in effects {
                let m = &e * rho.matrix() * e.adjoint();
                let p = crate::qmath::trace(&m).re;
                if p > 1e-15 {
                    out.push((
                        p,
                        DensityOperator::new_unchecked(rho.dims().to_vec(), m.unscale(p)),
                        label.to_string(),
                    ));
                }
            }
            Ok(LocalizedOutput::Outcomes(out))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::{approx_eq, hermitian_eigenvalues, trace};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn observable_axes() {
        let z = SpinObservable::z().matrix();
        assert!(approx_eq(&z, &pauli_z(), 1e-15));
        let x = SpinObservable::x().matrix();
        assert!(approx_eq(&x, &pauli_x(), 1e-15));
    }

    #[test]
    fn observable_eigenvalues_are_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let s = SpinObservable::random(&mut rng);
            let m = s.matrix();
            assert!(trace(&m).norm() < 1e-12);
            let w = hermitian_eigenvalues(&m).unwrap();
            assert!((w[0] + 1.0).abs() < 1e-12 && (w[1] - 1.0).abs() < 1e-12);
            assert!(approx_eq(&(&m * &m), &identity(2), 1e-12));
        }
    }

    fn rand_coupling(rng: &mut ChaCha8Rng) -> CouplingSpec {
        CouplingSpec::new(
            rng.gen_range(-3.0..3.0),
            SpinObservable::random(rng),
            SpinObservable::random(rng),
        )
        .unwrap()
    }

    #[test]
    fn interaction_unitary_endpoints() {
        let cpl = CouplingSpec::new(0.0, SpinObservable::x(), SpinObservable::z()).unwrap();
        assert!(approx_eq(&interaction_unitary(&cpl), &identity(4), 1e-15));

        let cpl = CouplingSpec::new(
            std::f64::consts::FRAC_PI_2,
            SpinObservable::x(),
            SpinObservable::z(),
        )
        .unwrap();
        let want = kron(&pauli_x(), &pauli_z()).map(|z| z * Complex64::new(0., 1.));
        assert!(approx_eq(&interaction_unitary(&cpl), &want, 1e-12));
    }

    /// Truncated power-series oracle for the matrix exponential.
    fn exp_series(a: &CMatrix, terms: usize) -> CMatrix {
        let n = a.nrows();
        let mut sum = identity(n);
        let mut term = identity(n);
        for k in 1..=terms {
            term = (&term * a).unscale(k as f64);
            sum += &term;
        }
        sum
    }

    #[test]
    fn interaction_unitary_matches_series_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let cpl = rand_coupling(&mut rng);
            let gen = kron(&cpl.sys_obs.matrix(), &cpl.env_obs.matrix())
                .map(|z| z * Complex64::new(0., cpl.theta));
            let want = exp_series(&gen, 40);
            assert!(approx_eq(&interaction_unitary(&cpl), &want, 1e-12));
        }
    }

    #[test]
    fn interaction_unitary_inverse_and_commutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let cpl = rand_coupling(&mut rng);
            let u = interaction_unitary(&cpl);
            let inv = interaction_unitary(
                &CouplingSpec::new(-cpl.theta, cpl.sys_obs, cpl.env_obs).unwrap(),
            );
            assert!(approx_eq(&(&u * &inv), &identity(4), 1e-12));
            let ss = kron(&cpl.sys_obs.matrix(), &cpl.env_obs.matrix());
            assert!(approx_eq(&(&u * &ss), &(&ss * &u), 1e-12));
        }
    }

    #[test]
    fn position_conditioned_identity_passthrough() {
        let u = position_conditioned_unitary(3, 1, &identity(4)).unwrap();
        assert!(approx_eq(&u, &identity(36), 1e-15));
    }

    #[test]
    fn position_conditioned_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for d in 2..=3 {
            for site in 0..d {
                let u_int = interaction_unitary(&rand_coupling(&mut rng));
                let u = position_conditioned_unitary(d, site, &u_int).unwrap();
                assert!(approx_eq(&(u.adjoint() * &u), &identity(d * d * 4), 1e-12));
            }
        }
    }

    /// Explicit-sum oracle: builds the operator as a sum of
    /// projector x projector x operator terms, then compares outputs on an
    /// equal superposition.
    #[test]
    fn position_conditioned_matches_explicit_sum_oracle() {
        let d = 2;
        let match_site = 0;
        let cpl = CouplingSpec::new(
            std::f64::consts::FRAC_PI_4,
            SpinObservable::z(),
            SpinObservable::z(),
        )
        .unwrap();
        let u_int = interaction_unitary(&cpl);

        let mut oracle = CMatrix::zeros(d * d * 4, d * d * 4);
        for i in 0..d {
            for j in 0..d {
                let op = if i == j && i == match_site {
                    u_int.clone()
                } else {
                    identity(4)
                };
                oracle += kron(
                    &kron(&basis_projector(d, i), &basis_projector(d, j)),
                    &op,
                );
            }
        }
        let got = position_conditioned_unitary(d, match_site, &u_int).unwrap();
        assert!(approx_eq(&got, &oracle, 1e-12));

        // Equal spatial superposition of the system, en-sub at match_site.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut psi = vec![Complex64::default(); d * d * 4];
        // (site_S, site_E=0, spin_S=0, spin_E=0)
        psi[0] = Complex64::new(s, 0.);
        psi[d * 4] = Complex64::new(s, 0.);
        let rho = DensityOperator::from_pure(vec![d, d, 2, 2], &psi).unwrap();
        let lhs = &got * rho.matrix() * got.adjoint();
        let rhs = &oracle * rho.matrix() * oracle.adjoint();
        assert!(approx_eq(&lhs, &rhs, 1e-12));

        // Amplitude entirely on the non-matching site: state unchanged.
        let mut psi2 = vec![Complex64::default(); d * d * 4];
        psi2[(1 * d + 1) * 4] = Complex64::new(1., 0.);
        let rho2 = DensityOperator::from_pure(vec![d, d, 2, 2], &psi2).unwrap();
        let out = &got * rho2.matrix() * got.adjoint();
        assert!(approx_eq(&out, rho2.matrix(), 1e-12));
    }

    fn two_site_plus_spin0() -> DensityOperator {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = [
            Complex64::new(s, 0.),
            Complex64::default(),
            Complex64::new(s, 0.),
            Complex64::default(),
        ];
        DensityOperator::from_pure(vec![2, 2], &psi).unwrap()
    }

    #[test]
    fn localized_identity_and_unitary() {
        let rho = two_site_plus_spin0();
        let op = LocalizedOp::new(0, LocalizedKind::Identity).unwrap();
        match apply_localized(&op, &rho).unwrap() {
            LocalizedOutput::State(s) => assert!(approx_eq(s.matrix(), rho.matrix(), 1e-15)),
            _ => panic!("expected state"),
        }

        // Fully localized at the op's site: sigma_x flips the spin there.
        let psi = [
            Complex64::new(1., 0.),
            Complex64::default(),
            Complex64::default(),
            Complex64::default(),
        ];
        let loc = DensityOperator::from_pure(vec![2, 2], &psi).unwrap();
        let op = LocalizedOp::new(0, LocalizedKind::Unitary(pauli_x())).unwrap();
        match apply_localized(&op, &loc).unwrap() {
            LocalizedOutput::State(s) => {
                let want = [
                    Complex64::default(),
                    Complex64::new(1., 0.),
                    Complex64::default(),
                    Complex64::default(),
                ];
                let w = DensityOperator::from_pure(vec![2, 2], &want).unwrap();
                assert!(approx_eq(s.matrix(), w.matrix(), 1e-12));
            }
            _ => panic!("expected state"),
        }
    }

    #[test]
    fn localized_measurement_born_probabilities() {
        // Equal two-site superposition, spin |0>, measuring |+>/|-> at site 0:
        // outcome probabilities (1/4, 1/4, 1/2) by direct Born arithmetic.
        let rho = two_site_plus_spin0();
        let half = Complex64::new(0.5, 0.);
        let plus = CMatrix::from_row_slice(2, 2, &[half, half, half, half]);
        let minus = identity(2) - &plus;
        let op = LocalizedOp::new(0, LocalizedKind::Measurement { plus, minus }).unwrap();
        match apply_localized(&op, &rho).unwrap() {
            LocalizedOutput::Outcomes(outs) => {
                let p: std::collections::BTreeMap<_, _> =
                    outs.iter().map(|(p, _, l)| (l.clone(), *p)).collect();
                assert!((p[OUTCOME_PLUS] - 0.25).abs() < 1e-12);
                assert!((p[OUTCOME_MINUS] - 0.25).abs() < 1e-12);
                assert!((p[OUTCOME_ABSENT] - 0.5).abs() < 1e-12);
            }
            _ => panic!("expected outcomes"),
        }
    }

    #[test]
    fn localized_unitary_leaves_other_sites_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..10 {
            let rho = crate::qmath::tests_support::random_density(&[3, 2], &mut rng);
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let u = CMatrix::from_row_slice(
                2,
                2,
                &[
                    Complex64::new(theta.cos(), 0.),
                    Complex64::new(0., theta.sin()),
                    Complex64::new(0., theta.sin()),
                    Complex64::new(theta.cos(), 0.),
                ],
            );
            let op = LocalizedOp::new(1, LocalizedKind::Unitary(u)).unwrap();
            let out = match apply_localized(&op, &rho).unwrap() {
                LocalizedOutput::State(s) => s,
                _ => unreachable!(),
            };
            // Project on "particle at site 2" before and after; the conditional
            // spin state there must be unchanged.
            for site in [0usize, 2] {
                if site == op.site {
                    continue;
                }
                let proj = kron(&basis_projector(3, site), &identity(2));
                let before = &proj * rho.matrix() * &proj;
                let after = &proj * out.matrix() * &proj;
                assert!(approx_eq(&before, &after, 1e-12));
            }
        }
    }

    #[test]
    fn canonical_angle_range() {
        let t = canonicalize_angle(3.0 * std::f64::consts::PI);
        assert!((t - std::f64::consts::PI).abs() < 1e-12);
        let t2 = canonicalize_angle(-3.5 * std::f64::consts::PI);
        assert!(t2 > -std::f64::consts::PI && t2 <= std::f64::consts::PI);
    }
}

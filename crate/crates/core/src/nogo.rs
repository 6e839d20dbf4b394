//! Two-lab signaling protocols.
//!
//! A particle is spread over two sites (Alice at site 0, Bob at site 1) with
//! its spin prepared in |0>. Alice encodes a uniform bit either by a unitary
//! on the internal degree or by a measurement choice; Bob reads the spin in
//! the z basis and records a bit. Running each protocol with nonlocal
//! internal-degree operations yields nonzero mutual information between the
//! bits; replacing them with their site-localized counterparts yields zero.
//! All probabilities come from exact density-operator arithmetic; nothing is
//! sampled.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::qmath::{
    identity, kron, mutual_information_cc, trace, CMatrix, DensityOperator, JointDistribution,
};
use crate::spin::{
    apply_localized, basis_projector, pauli_x, LocalizedKind, LocalizedOp, LocalizedOutput,
    OUTCOME_ABSENT,
};

/// Mutual information above this flags an NFLCP violation.
pub const NFLCP_TOL: f64 = 1e-9;

/// Alice's lab sits at site 0 (-alpha), Bob's at site 1 (+alpha).
pub const ALICE_SITE: usize = 0;
pub const BOB_SITE: usize = 1;

/// Two-site particle with an internal spin.
#[derive(Debug, Clone)]
pub struct TwoLabState {
    /// Half-separation of the labs (bookkeeping only; dynamics use the ideal
    /// two-site basis).
    pub alpha: f64,
    /// Wavepacket width.
    pub sigma: f64,
    /// Site amplitudes over {-alpha, +alpha}.
    pub amplitudes: [Complex64; 2],
    /// Internal spin state (2x2).
    pub spin: DensityOperator,
}

impl TwoLabState {
    /// Symmetric superposition with spin |0>.
    pub fn symmetric() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            alpha: 1.0,
            sigma: 1e-3,
            amplitudes: [Complex64::new(s, 0.), Complex64::new(s, 0.)],
            spin: DensityOperator::from_bloch([0., 0., 1.]).unwrap(),
        }
    }

    /// Full state on (site x spin).
    pub fn density(&self) -> DensityOperator {
        let mut site = CMatrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                site[(i, j)] = self.amplitudes[i] * self.amplitudes[j].conj();
            }
        }
        DensityOperator::new_unchecked(
            vec![2, 2],
            kron(&site, self.spin.matrix()),
        )
    }
}

/// Two-site discretization of a symmetric double-Gaussian wavepacket.
///
/// Treats the two humps as basis states; returns the (real, equal) site
/// amplitudes and the inter-hump overlap exp(-alpha^2 / (2 sigma^2)). The
/// protocols assume the overlap is negligible; this quantifies the neglected
/// term.
pub fn discretize_gaussian(alpha: f64, sigma: f64) -> Result<([f64; 2], f64)> {
    if alpha <= 0.0 || sigma <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "alpha and sigma must be positive, got alpha={alpha}, sigma={sigma}"
        )));
    }
    let overlap = (-alpha * alpha / (2.0 * sigma * sigma)).exp();
    let amp = 1.0 / (2.0 * (1.0 + overlap)).sqrt();
    Ok(([amp, amp], overlap))
}

/// Outcome of one protocol run: the exact joint distribution over Alice's bit
/// and Bob's record, with its mutual information.
#[derive(Debug, Clone)]
pub struct ProtocolResult {
    pub joint: JointDistribution,
    pub mutual_info_bits: f64,
    pub nflcp_violated: bool,
}

impl ProtocolResult {
    fn from_table(table: BTreeMap<(String, String), f64>) -> Result<Self> {
        let joint = JointDistribution::new(table)?;
        let mi = mutual_information_cc(&joint);
        Ok(Self {
            joint,
            mutual_info_bits: mi,
            nflcp_violated: mi > NFLCP_TOL,
        })
    }
}

/// Bob's nonlocal sigma_z readout: p(b) for b in {0, 1} regardless of where
/// the particle is.
fn bob_nonlocal_readout(rho: &DensityOperator) -> [f64; 2] {
    let mut p = [0.0; 2];
    for b in 0..2 {
        let eff = kron(&identity(2), &basis_projector(2, b));
        p[b] = trace(&(&eff * rho.matrix())).re;
    }
    p
}

/// Bob's site-localized sigma_z instrument: outcomes "0", "1", "absent".
fn bob_localized_readout(rho: &DensityOperator) -> Result<Vec<(f64, String)>> {
    let op = LocalizedOp::new(
        BOB_SITE,
        LocalizedKind::Measurement {
            plus: basis_projector(2, 0),
            minus: basis_projector(2, 1),
        },
    )?;
    let outs = match apply_localized(&op, rho)? {
        LocalizedOutput::Outcomes(o) => o,
        _ => unreachable!(),
    };
    Ok(outs
        .into_iter()
        .map(|(p, _, label)| {
            let b = match label.as_str() {
                crate::spin::OUTCOME_PLUS => "0".to_string(),
                crate::spin::OUTCOME_MINUS => "1".to_string(),
                _ => OUTCOME_ABSENT.to_string(),
            };
            (p, b)
        })
        .collect())
}

/// Unitary protocol: Alice applies I or sigma_x to the internal degree.
///
/// `localized = false` applies the bare internal-degree unitary everywhere the
/// wavefunction lives; `localized = true` restricts it to Alice's site and
/// replaces Bob's readout with the site-localized instrument.
pub fn run_unitary_protocol(localized: bool) -> Result<ProtocolResult> {
    let init = TwoLabState::symmetric().density();
    let mut table = BTreeMap::new();
    for a in 0..2u8 {
        let after = if a == 0 {
            init.clone()
        } else if localized {
            let op = LocalizedOp::new(ALICE_SITE, LocalizedKind::Unitary(pauli_x()))?;
            match apply_localized(&op, &init)? {
                LocalizedOutput::State(s) => s,
                _ => unreachable!(),
            }
        } else {
            let u = kron(&identity(2), &pauli_x());
            DensityOperator::new_unchecked(vec![2, 2], &u * init.matrix() * u.adjoint())
        };
        accumulate_bob(&mut table, a, &after, localized)?;
    }
    ProtocolResult::from_table(table)
}

/// Alice's measurement basis in the measurement protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AliceBasis {
    /// |+>/|-> — complementary to Bob's readout.
    PlusMinus,
    /// |0>/|1> — the same basis Bob reads; carries no signal even nonlocally.
    Computational,
}

fn alice_projectors(basis: AliceBasis) -> (CMatrix, CMatrix) {
    match basis {
        AliceBasis::PlusMinus => {
            let half = Complex64::new(0.5, 0.);
            let plus = CMatrix::from_row_slice(2, 2, &[half, half, half, half]);
            let minus = identity(2) - &plus;
            (plus, minus)
        }
        AliceBasis::Computational => (basis_projector(2, 0), basis_projector(2, 1)),
    }
}

/// Measurement protocol: a = 0 leaves the state alone, a = 1 measures the
/// internal degree (nonselectively) in the chosen basis.
pub fn run_measurement_protocol_in_basis(
    localized: bool,
    basis: AliceBasis,
) -> Result<ProtocolResult> {
    let init = TwoLabState::symmetric().density();
    let (plus, minus) = alice_projectors(basis);
    let mut table = BTreeMap::new();
    for a in 0..2u8 {
        let after = if a == 0 {
            init.clone()
        } else if localized {
            let op = LocalizedOp::new(ALICE_SITE, LocalizedKind::Measurement { plus: plus.clone(), minus: minus.clone() })?;
            let outs = match apply_localized(&op, &init)? {
                LocalizedOutput::Outcomes(o) => o,
                _ => unreachable!(),
            };
            // Nonselective: Alice does not transmit her outcome.
            let mut m = CMatrix::zeros(4, 4);
            for (p, state, _) in outs {
                m += state.matrix().scale(p);
            }
            DensityOperator::new_unchecked(vec![2, 2], m)
        } else {
            let mut m = CMatrix::zeros(4, 4);
            for proj in [&plus, &minus] {
                let eff = kron(&identity(2), proj);
                m += &eff * init.matrix() * eff.adjoint();
            }
            DensityOperator::new_unchecked(vec![2, 2], m)
        };
        accumulate_bob(&mut table, a, &after, localized)?;
    }
    ProtocolResult::from_table(table)
}

/// Measurement protocol with Alice's |+>/|-> measurement.
pub fn run_measurement_protocol(localized: bool) -> Result<ProtocolResult> {
    run_measurement_protocol_in_basis(localized, AliceBasis::PlusMinus)
}

/// Unitary protocol with Alice's bit pinned to zero; carries no information.
pub fn run_unitary_protocol_degenerate() -> Result<ProtocolResult> {
    let init = TwoLabState::symmetric().density();
    let mut table = BTreeMap::new();
    // a = 0 with probability 1: a constant input symbol.
    accumulate_bob_weighted(&mut table, 0, 1.0, &init, false)?;
    ProtocolResult::from_table(table)
}

fn accumulate_bob(
    table: &mut BTreeMap<(String, String), f64>,
    a: u8,
    rho: &DensityOperator,
    localized: bool,
) -> Result<()> {
    accumulate_bob_weighted(table, a, 0.5, rho, localized)
}

fn accumulate_bob_weighted(
    table: &mut BTreeMap<(String, String), f64>,
    a: u8,
    weight: f64,
    rho: &DensityOperator,
    localized: bool,
) -> Result<()> {
    if localized {
        for (p, b) in bob_localized_readout(rho)? {
            *table.entry((a.to_string(), b)).or_insert(0.0) += weight * p;
        }
    } else {
        let p = bob_nonlocal_readout(rho);
        for b in 0..2 {
            if p[b] > 1e-15 {
                *table.entry((a.to_string(), b.to_string())).or_insert(0.0) += weight * p[b];
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::binary_entropy;

    #[test]
    fn gaussian_overlap_values() {
        // sigma << alpha: amplitudes -> 1/sqrt(2), overlap -> 0.
        let (amps, ov) = discretize_gaussian(1.0, 1e-4).unwrap();
        assert!((amps[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(ov < 1e-300);

        let (_, ov) = discretize_gaussian(5.0, 1.0).unwrap();
        assert!((ov - (-12.5f64).exp()).abs() < 1e-12);
        let (_, ov) = discretize_gaussian(1.0, 1.0).unwrap();
        assert!((ov - (-0.5f64).exp()).abs() < 1e-12);

        assert!(discretize_gaussian(0.0, 1.0).is_err());
        assert!(discretize_gaussian(1.0, -1.0).is_err());
    }

    /// Numerical quadrature oracle for the hump overlap.
    #[test]
    fn gaussian_overlap_matches_quadrature() {
        for (alpha, sigma) in [(5.0f64, 1.0f64), (1.0, 1.0), (2.0, 0.7)] {
            let hump = |x: f64, center: f64| (-(x - center).powi(2) / (4.0 * sigma * sigma)).exp();
            // Simpson's rule over a wide window.
            let (lo, hi, n) = (-alpha - 12.0 * sigma, alpha + 12.0 * sigma, 40001usize);
            let h = (hi - lo) / (n - 1) as f64;
            let integ = |f: &dyn Fn(f64) -> f64| {
                let mut s = f(lo) + f(hi);
                for k in 1..n - 1 {
                    s += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
                }
                s * h / 3.0
            };
            let cross = integ(&|x| hump(x, alpha) * hump(x, -alpha));
            let norm = integ(&|x| hump(x, alpha) * hump(x, alpha));
            let (_, ov) = discretize_gaussian(alpha, sigma).unwrap();
            assert!(
                (cross / norm - ov).abs() < 1e-9,
                "alpha={alpha} sigma={sigma}: {} vs {ov}",
                cross / norm
            );
        }
    }

    #[test]
    fn unitary_protocol_nonlocal_signals_one_bit() {
        let r = run_unitary_protocol(false).unwrap();
        assert!((r.mutual_info_bits - 1.0).abs() < 1e-12);
        assert!(r.nflcp_violated);
        // Perfectly correlated table.
        assert!((r.joint.prob("0", "0") - 0.5).abs() < 1e-12);
        assert!((r.joint.prob("1", "1") - 0.5).abs() < 1e-12);
        assert!(r.joint.prob("0", "1") < 1e-15);
    }

    #[test]
    fn unitary_protocol_localized_is_silent() {
        let r = run_unitary_protocol(true).unwrap();
        assert!(r.mutual_info_bits.abs() <= 1e-12);
        assert!(!r.nflcp_violated);
    }

    #[test]
    fn unitary_protocol_degenerate_input() {
        let r = run_unitary_protocol_degenerate().unwrap();
        assert!(r.mutual_info_bits.abs() <= 1e-12);
    }

    #[test]
    fn measurement_protocol_nonlocal_table() {
        let r = run_measurement_protocol(false).unwrap();
        assert!((r.joint.prob("0", "0") - 0.5).abs() < 1e-12);
        assert!((r.joint.prob("1", "0") - 0.25).abs() < 1e-12);
        assert!((r.joint.prob("1", "1") - 0.25).abs() < 1e-12);
        // I = H(B) - H(B|A) = h(1/4) - 1/2: Bob's marginal is (3/4, 1/4),
        // and his bit is deterministic for a = 0, uniform for a = 1.
        let want = binary_entropy(0.25).unwrap() - 0.5;
        assert!((r.mutual_info_bits - want).abs() < 1e-12);
        // Bob's marginal: p(b=1) = 1/4.
        assert!((r.joint.marginal_b()["1"] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn measurement_protocol_localized_is_silent() {
        let r = run_measurement_protocol(true).unwrap();
        assert!(r.mutual_info_bits.abs() <= 1e-12);
    }

    #[test]
    fn measurement_protocol_basis_matched_is_silent_even_nonlocally() {
        // Direct Born-rule enumeration: measuring in Bob's own basis commutes
        // with his readout, so the joint table factorizes.
        let r = run_measurement_protocol_in_basis(false, AliceBasis::Computational).unwrap();
        assert!(r.mutual_info_bits.abs() <= 1e-12);
    }

    #[test]
    fn localized_runs_bob_marginal_independent_of_alice() {
        // The operational NFLCP statement: max_a || p(b|a) - p(b) ||_1 = 0.
        for result in [
            run_unitary_protocol(true).unwrap(),
            run_measurement_protocol(true).unwrap(),
        ] {
            let pb = result.joint.marginal_b();
            let pa = result.joint.marginal_a();
            for (a, &paw) in &pa {
                let mut l1 = 0.0;
                for (b, &pbw) in &pb {
                    let cond = result.joint.prob(a, b) / paw;
                    l1 += (cond - pbw).abs();
                }
                assert!(l1 <= 1e-12, "l1 = {l1} for a = {a}");
            }
        }
    }
}

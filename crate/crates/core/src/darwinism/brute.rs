//! Exact brute-force engine: the full density matrix on
//! site_S x spin_S x spin_E^(xN), evolved one en-sub at a time.
//!
//! Each en-sub's position is a classical label (en-subs are fixed in place),
//! so its interaction enters as a site-conditioned two-spin gate rather than
//! a quantum site register; the literal operator form is validated separately
//! against the explicit-sum oracle in `spin`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::qmath::{kron, partial_trace, CMatrix, DensityOperator};
use crate::spin::interaction_unitary;

use super::model::DarwinModel;

/// Default Hilbert-dimension cap for dense construction.
pub const DEFAULT_DIM_CAP: usize = 1 << 14;

fn full_dim(model: &DarwinModel) -> usize {
    model
        .d
        .checked_shl(model.n_ensubs() as u32 + 1)
        .unwrap_or(usize::MAX)
}

fn initial_state(model: &DarwinModel) -> DensityOperator {
    let d = model.d;
    let mut site = CMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            site[(i, j)] = model.amplitudes[i] * model.amplitudes[j].conj();
        }
    }
    let mut m = kron(&site, model.system_spin.matrix());
    let mut dims = vec![d, 2];
    for e in &model.ensubs {
        m = kron(&m, e.initial_spin.matrix());
        dims.push(2);
    }
    DensityOperator::new_unchecked(dims, m)
}

/// Applies the `ensub_idx`-th en-sub's interaction in place: the 4x4 spin-spin
/// unitary on (spin_S, spin_E) conditioned on the system site register equaling
/// the en-sub's home site.
fn apply_ensub_gate(state: &mut DensityOperator, model: &DarwinModel, ensub_idx: usize) {
    let n = model.n_ensubs();
    let d = model.d;
    let dim = full_dim(model);
    let ensub = &model.ensubs[ensub_idx];
    let u4 = interaction_unitary(&ensub.coupling);

    let site_stride = 1usize << (n + 1);
    let spin_s_stride = 1usize << n;
    let e_stride = 1usize << (n - 1 - ensub_idx);
    let home_base = ensub.home_site * site_stride;
    debug_assert_eq!(dim, d * site_stride);

    // Offsets of all basis states within the home-site block that have the
    // two active spins cleared.
    let rests: Vec<usize> = (0..site_stride)
        .filter(|x| x & spin_s_stride == 0 && x & e_stride == 0)
        .collect();

    let u: [[Complex64; 4]; 4] =
        std::array::from_fn(|p| std::array::from_fn(|q| u4[(p, q)]));
    let idx_off = [
        0,
        e_stride,
        spin_s_stride,
        spin_s_stride + e_stride,
    ];

    let m = state.matrix_mut().as_mut_slice();

    // Left multiplication by U: mixes rows within the home-site block.
    for col in 0..dim {
        let col_off = col * dim;
        for &rest in &rests {
            let base = col_off + home_base + rest;
            let old = [
                m[base + idx_off[0]],
                m[base + idx_off[1]],
                m[base + idx_off[2]],
                m[base + idx_off[3]],
            ];
            for p in 0..4 {
                let mut acc = Complex64::default();
                for q in 0..4 {
                    acc += u[p][q] * old[q];
                }
                m[base + idx_off[p]] = acc;
            }
        }
    }
    // Right multiplication by U^dagger: mixes columns within the block.
    for row in 0..dim {
        for &rest in &rests {
            let base = home_base + rest;
            let at = |p: usize| row + (base + idx_off[p]) * dim;
            let old = [m[at(0)], m[at(1)], m[at(2)], m[at(3)]];
            for p in 0..4 {
                let mut acc = Complex64::default();
                for q in 0..4 {
                    acc += old[q] * u[p][q].conj();
                }
                m[at(p)] = acc;
            }
        }
    }
}

/// Evolves the full state through the first `steps` en-subs of the roster.
pub fn brute_force_evolve_prefix(
    model: &DarwinModel,
    cap: usize,
    steps: usize,
) -> Result<DensityOperator> {
    let dim = full_dim(model);
    if dim > cap {
        return Err(Error::ResourceCap { needed: dim, cap });
    }
    if steps > model.n_ensubs() {
        return Err(Error::InvalidArgument(format!(
            "{} steps for {} en-subs",
            steps,
            model.n_ensubs()
        )));
    }
    let mut state = initial_state(model);
    for e in 0..steps {
        apply_ensub_gate(&mut state, model, e);
    }
    Ok(state)
}

/// Exact evolution through the whole roster, in roster order.
pub fn brute_force_evolve(model: &DarwinModel, cap: usize) -> Result<DensityOperator> {
    brute_force_evolve_prefix(model, cap, model.n_ensubs())
}

/// Conditional block of the full state given the system at site `i`:
/// (branch probability, normalized state on spin_S x spin_E^(xN)).
pub fn branch_block(full: &DensityOperator, i: usize) -> Result<(f64, DensityOperator)> {
    let dims = full.dims();
    let d = dims[0];
    if i >= d {
        return Err(Error::InvalidArgument(format!("branch {i} >= d = {d}")));
    }
    let block_dim: usize = dims[1..].iter().product();
    let base = i * block_dim;
    let sub = full.matrix().view((base, base), (block_dim, block_dim));
    let m: CMatrix = sub.into();
    let p = m.diagonal().sum().re;
    if p < 1e-15 {
        return Err(Error::InvalidArgument(format!(
            "branch {i} has zero probability"
        )));
    }
    Ok((
        p,
        DensityOperator::new_unchecked(dims[1..].to_vec(), m.unscale(p)),
    ))
}

/// Traces out flagged en-subs (factor index 2 + roster index), and the system
/// spin when requested.
pub fn discard_full(
    full: &DensityOperator,
    discard: &[bool],
    drop_system_spin: bool,
) -> Result<DensityOperator> {
    let n = full.dims().len() - 2;
    if discard.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} discard flags for {} en-subs",
            discard.len(),
            n
        )));
    }
    let mut keep = vec![0usize];
    if !drop_system_spin {
        keep.push(1);
    }
    for (e, &flag) in discard.iter().enumerate() {
        if !flag {
            keep.push(2 + e);
        }
    }
    partial_trace(full, &keep)
}

/// Frobenius norm of the (k, l) position coherence block of the state reduced
/// to (site, system spin). This is the quantity whose per-interaction decay
/// follows the (1 - delta sin^2 theta)^(1/2) law.
pub fn offdiagonal_norm(full: &DensityOperator, k: usize, l: usize) -> Result<f64> {
    let d = full.dims()[0];
    if k >= d || l >= d {
        return Err(Error::InvalidArgument(format!(
            "branch pair ({k}, {l}) out of range for d = {d}"
        )));
    }
    if k == l {
        return Err(Error::InvalidArgument(
            "diagonal is not a coherence block".into(),
        ));
    }
    let reduced = partial_trace(full, &[0, 1])?;
    let m = reduced.matrix();
    let mut sum = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            sum += m[(k * 2 + a, l * 2 + b)].norm_sqr();
        }
    }
    Ok(sum.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::darwinism::model::{build_model, ModelConfig};
    use crate::qmath::{approx_eq, frobenius_norm, trace};
    use crate::spin::interaction_unitary;

    fn model_with_thetas(seed: u64, per_site: Vec<usize>, theta: Option<f64>) -> DarwinModel {
        let mut cfg = ModelConfig::new(per_site.len(), per_site, seed);
        if let Some(t) = theta {
            cfg.theta_range = (t, t);
        }
        build_model(&cfg).unwrap()
    }

    #[test]
    fn zero_coupling_is_identity_evolution() {
        let model = model_with_thetas(5, vec![2, 1], Some(0.0));
        let out = brute_force_evolve(&model, DEFAULT_DIM_CAP).unwrap();
        let init = initial_state(&model);
        assert!(approx_eq(out.matrix(), init.matrix(), 1e-12));
    }

    #[test]
    fn single_branch_single_ensub_reduces_to_plain_conjugation() {
        // Amplitudes fully on site 0, one en-sub homed there: the (spin_S,
        // spin_E) block is u_int rho u_int^dagger.
        let mut cfg = ModelConfig::new(2, vec![1, 0], 8);
        cfg.amplitudes = Some(vec![Complex64::new(1., 0.), Complex64::default()]);
        let model = build_model(&cfg).unwrap();
        let out = brute_force_evolve(&model, DEFAULT_DIM_CAP).unwrap();
        let (p, block) = branch_block(&out, 0).unwrap();
        assert!((p - 1.0).abs() < 1e-12);

        let u = interaction_unitary(&model.ensubs[0].coupling);
        let rho0 = kron(
            model.system_spin.matrix(),
            model.ensubs[0].initial_spin.matrix(),
        );
        let want = &u * rho0 * u.adjoint();
        assert!(approx_eq(block.matrix(), &want, 1e-12));
    }

    #[test]
    fn evolution_preserves_trace_and_hermiticity() {
        let model = model_with_thetas(13, vec![2, 2], None);
        let out = brute_force_evolve(&model, DEFAULT_DIM_CAP).unwrap();
        assert!((trace(out.matrix()).re - 1.0).abs() < 1e-10);
        let m = out.matrix();
        assert!(frobenius_norm(&(m.adjoint() - m)) < 1e-10);
    }

    #[test]
    fn branch_probabilities_are_invariant() {
        let model = model_with_thetas(21, vec![2, 3], None);
        let out = brute_force_evolve(&model, DEFAULT_DIM_CAP).unwrap();
        let probs = model.branch_probs();
        for i in 0..model.d {
            let (p, _) = branch_block(&out, i).unwrap();
            assert!((p - probs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cap_is_enforced() {
        let model = model_with_thetas(1, vec![6, 6], None);
        let err = brute_force_evolve(&model, 64).unwrap_err();
        assert!(matches!(err, Error::ResourceCap { .. }));
    }

    #[test]
    fn discard_everything_approaches_site_distribution() {
        // Diagonals are exactly |alpha_i|^2 at any size; the coherences only
        // vanish asymptotically, so here they are checked against the decay
        // bound instead (|tr M| <= sqrt(2) ||M||_F for the 2x2 spin block).
        let model = model_with_thetas(30, vec![2, 2], None);
        let out = brute_force_evolve(&model, DEFAULT_DIM_CAP).unwrap();
        let site = discard_full(&out, &vec![true; 4], true).unwrap();
        let probs = model.branch_probs();
        for i in 0..2 {
            assert!((site.matrix()[(i, i)] - Complex64::new(probs[i], 0.)).norm() < 1e-12);
        }
        let bound = 2f64.sqrt() * offdiagonal_norm(&out, 0, 1).unwrap();
        let coherence = site.matrix()[(0, 1)].norm();
        assert!(coherence <= bound + 1e-12);
        // Strictly below the undamped value: decoherence happened.
        assert!(coherence < (probs[0] * probs[1]).sqrt());
    }

    #[test]
    fn discard_nothing_is_identity() {
        let model = model_with_thetas(31, vec![1, 1], None);
        let out = brute_force_evolve(&model, DEFAULT_DIM_CAP).unwrap();
        let kept = discard_full(&out, &vec![false; 2], false).unwrap();
        assert!(approx_eq(kept.matrix(), out.matrix(), 1e-12));
    }

    #[test]
    fn offdiagonal_norm_contract() {
        let model = model_with_thetas(32, vec![1, 1], Some(0.0));
        let out = brute_force_evolve(&model, DEFAULT_DIM_CAP).unwrap();
        assert!(offdiagonal_norm(&out, 0, 0).is_err());
        assert!(offdiagonal_norm(&out, 0, 5).is_err());
        // theta = 0: no decay; block norm is |alpha_k alpha_l| * ||rho_S||_F.
        let probs = model.branch_probs();
        let want = (probs[0] * probs[1]).sqrt() * frobenius_norm(model.system_spin.matrix());
        let got = offdiagonal_norm(&out, 0, 1).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    /// Embeds a 4x4 two-qubit gate on (spin_S, spin_E e) of the
    /// (N+1)-qubit spin space, by direct index arithmetic.
    fn embed_gate(u4: &CMatrix, n: usize, e: usize) -> CMatrix {
        let dim = 1usize << (n + 1);
        let s_bit = 1usize << n;
        let e_bit = 1usize << (n - 1 - e);
        let mask = !(s_bit | e_bit);
        let mut m = CMatrix::zeros(dim, dim);
        for r in 0..dim {
            for c in 0..dim {
                if r & mask != c & mask {
                    continue;
                }
                let p = ((r & s_bit != 0) as usize) * 2 + (r & e_bit != 0) as usize;
                let q = ((c & s_bit != 0) as usize) * 2 + (c & e_bit != 0) as usize;
                m[(r, c)] = u4[(p, q)];
            }
        }
        m
    }

    /// Ordered product of the per-en-sub gates that act inside branch `i`.
    fn branch_unitary(model: &DarwinModel, i: usize) -> CMatrix {
        let n = model.n_ensubs();
        let mut u = CMatrix::identity(1 << (n + 1), 1 << (n + 1));
        for (e, ensub) in model.ensubs.iter().enumerate() {
            if ensub.home_site == i {
                u = embed_gate(&interaction_unitary(&ensub.coupling), n, e) * u;
            }
        }
        u
    }

    #[test]
    fn offdiagonal_block_matches_branch_unitary_product() {
        // Every position block (k, l) of the evolved state is
        // alpha_k conj(alpha_l) U_k B U_l^dagger with B the initial spin
        // product state, reconstructed here from scratch.
        let model = model_with_thetas(40, vec![2, 1, 2], None);
        let out = brute_force_evolve(&model, DEFAULT_DIM_CAP).unwrap();
        let mut b = model.system_spin.matrix().clone();
        for e in &model.ensubs {
            b = kron(&b, e.initial_spin.matrix());
        }
        let block_dim = b.nrows();
        let us: Vec<CMatrix> = (0..model.d).map(|i| branch_unitary(&model, i)).collect();
        for k in 0..model.d {
            for l in 0..model.d {
                let want = (&us[k] * &b * us[l].adjoint())
                    * (model.amplitudes[k] * model.amplitudes[l].conj());
                let got: CMatrix = out
                    .matrix()
                    .view((k * block_dim, l * block_dim), (block_dim, block_dim))
                    .into();
                assert!(
                    approx_eq(&got, &want, 1e-10),
                    "block ({k}, {l}) mismatch"
                );
            }
        }
    }

    #[test]
    fn offdiagonal_decay_matches_per_step_law() {
        // Sequential oracle: after each interaction the (0,1) block norm
        // shrinks by sqrt(1 - delta sin^2 theta) when the en-sub is homed at
        // 0 or 1 (here d=2, so every step decays it).
        let model = model_with_thetas(33, vec![3, 3], None);
        let mut expected = {
            let probs = model.branch_probs();
            (probs[0] * probs[1]).sqrt() * frobenius_norm(model.system_spin.matrix())
        };
        for step in 0..model.n_ensubs() {
            let e = &model.ensubs[step];
            let env_expect =
                trace(&(e.coupling.env_obs.matrix() * e.initial_spin.matrix())).re;
            let delta = 1.0 - env_expect * env_expect;
            expected *= (1.0 - delta * e.coupling.theta.sin().powi(2)).max(0.0).sqrt();
            let state = brute_force_evolve_prefix(&model, DEFAULT_DIM_CAP, step + 1).unwrap();
            let got = offdiagonal_norm(&state, 0, 1).unwrap();
            assert!(
                (got - expected).abs() < 1e-9,
                "step {step}: {got} vs {expected}"
            );
        }
    }
}

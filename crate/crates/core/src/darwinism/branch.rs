//! Fast branch-wise engine: linear in the number of en-subs.
//!
//! Within one position branch the state stays a product of qubit factors, so
//! each interaction only needs the single-spin update rules:
//!
//!  * en-sub spin:   rho' = cos^2(theta) rho + sin^2(theta) sigma rho sigma
//!    (exact when the system spin entering the step is maximally mixed);
//!  * system spin:   the Bloch-vector recursion of [`bloch_update`];
//!  * cross-branch coherence: norm-only tracking via the multiplicative
//!    factor (1 - delta sin^2 theta) of [`omega_update_normsq`].

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::qmath::{kron, partial_trace, trace, CMatrix, DensityOperator};
use crate::spin::{random_qubit_state, CouplingSpec, SpinObservable};

use super::model::DarwinModel;

/// Everything one interaction step needs: the system-spin Bloch vector, the
/// coupled system observable direction, the strength, and the environment-side
/// expectation value e = Tr(sigma_E rho_E).
#[derive(Debug, Clone, Copy)]
pub struct PropositionInputs {
    pub r: [f64; 3],
    pub s_hat: SpinObservable,
    pub theta: f64,
    pub env_expect: f64,
}

impl PropositionInputs {
    /// delta = 1 - e^2, the decoherence strength of the en-sub state.
    pub fn delta(&self) -> f64 {
        1.0 - self.env_expect * self.env_expect
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// System-spin Bloch vector after one interaction:
///
///   r' = ||r|| (cos^2(theta) r_hat + sin^2(theta) k_hat)
///        - ||r|| sin(2 theta) e (s_hat x r_hat),
///
/// with k_hat = 2 cos(phi) s_hat - r_hat the reflection of r_hat about the
/// coupling axis and cos(phi) = s_hat . r_hat. Writing k_hat this way avoids
/// dividing by sin(phi), so collinear r and s need no special case.
pub fn bloch_update(inp: &PropositionInputs) -> [f64; 3] {
    let r_norm = norm(inp.r);
    if r_norm == 0.0 {
        return [0.0, 0.0, 0.0];
    }
    let r_hat: [f64; 3] = std::array::from_fn(|a| inp.r[a] / r_norm);
    let s = inp.s_hat.bloch();
    let cos_phi = dot(s, r_hat);
    let (c2, s2) = (inp.theta.cos().powi(2), inp.theta.sin().powi(2));
    let twist = (2.0 * inp.theta).sin() * inp.env_expect;
    let sxr = cross(s, r_hat);
    std::array::from_fn(|a| {
        let k_hat = 2.0 * cos_phi * s[a] - r_hat[a];
        r_norm * (c2 * r_hat[a] + s2 * k_hat - twist * sxr[a])
    })
}

/// Closed-form ||r'||^2 = ||r||^2 (1 - delta sin^2(2 theta) sin^2(phi)).
///
/// The angle doubles: at theta = pi/2 the interaction acts as the unitary
/// sigma_S x sigma_E, which rotates the system spin without mixing it, so the
/// purity loss must vanish there (and it is maximal at theta = pi/4).
pub fn bloch_norm_law(inp: &PropositionInputs) -> f64 {
    let r_sq = dot(inp.r, inp.r);
    if r_sq == 0.0 {
        return 0.0;
    }
    let r_hat: [f64; 3] = std::array::from_fn(|a| inp.r[a] / r_sq.sqrt());
    let sin_phi_sq = dot(cross(inp.s_hat.bloch(), r_hat), cross(inp.s_hat.bloch(), r_hat));
    r_sq * (1.0 - inp.delta() * (2.0 * inp.theta).sin().powi(2) * sin_phi_sq)
}

/// One-sided coherence-block update c' = cos(theta) c + i e sin(theta) S c,
/// with S the coupled system observable. Returns (c', sum of |c'_ij|^2);
/// the norm obeys sum ||c'||^2 = sum ||c||^2 (1 - delta sin^2 theta) exactly.
pub fn omega_update_normsq(
    c: &CMatrix,
    theta: f64,
    env_expect: f64,
    sys_obs: &SpinObservable,
) -> (CMatrix, f64) {
    let rotated = sys_obs.matrix() * c;
    let c_new = c * Complex64::new(theta.cos(), 0.0)
        + rotated * Complex64::new(0.0, env_expect * theta.sin());
    let normsq = c_new.iter().map(|z| z.norm_sqr()).sum();
    (c_new, normsq)
}

/// Product-state snapshot of all position branches after evolution.
#[derive(Debug, Clone)]
pub struct BranchEnsemble {
    /// p_i = |alpha_i|^2; invariant under evolution and discarding.
    pub branch_probs: Vec<f64>,
    /// Roster indices of the en-subs still present, in roster order.
    pub ensub_ids: Vec<usize>,
    /// Per-branch, per-present-en-sub qubit states (perturbed iff homed at
    /// that branch).
    pub branch_states: Vec<Vec<DensityOperator>>,
    /// Per-branch system spin from the Bloch recursion.
    pub system_spin_branch: Vec<DensityOperator>,
    /// Upper bounds on cross-branch coherence-block Frobenius norms: entry
    /// (k, l) multiplies sqrt(1 - delta sin^2 theta) over every *absent*
    /// (traced-out) en-sub homed at k or l. Straight out of
    /// [`branch_evolve_fast`] nothing has been discarded yet, so the bound is
    /// the initial |alpha_k alpha_l| ||rho_S||_F; [`discard_ensemble`]
    /// tightens it.
    pub offdiag_norm: DMatrix<f64>,
    /// Per-branch accumulated bound on the en-sub fast-path error,
    /// sum of ||r|| |sin 2 theta| over that branch's steps. Zero when the
    /// system spin is maximally mixed.
    pub approx_error: Vec<f64>,
    /// Steps with delta sin^2 theta below threshold: physically valid but
    /// contributing no decoherence.
    pub non_decohering_steps: usize,
}

impl BranchEnsemble {
    fn check(&self) {
        let total: f64 = self.branch_probs.iter().sum();
        debug_assert!((total - 1.0).abs() < 1e-12);
    }
}

fn env_expectation(ensub: &super::model::EnSub) -> f64 {
    trace(&(ensub.coupling.env_obs.matrix() * ensub.initial_spin.matrix())).re
}

fn initial_offdiag_norm(model: &DarwinModel) -> DMatrix<f64> {
    let probs = model.branch_probs();
    let rho_s_norm = crate::qmath::frobenius_norm(model.system_spin.matrix());
    DMatrix::from_fn(model.d, model.d, |k, l| {
        if k == l {
            0.0
        } else {
            (probs[k] * probs[l]).sqrt() * rho_s_norm
        }
    })
}

/// Evolves every branch through the full roster in roster order.
pub fn branch_evolve_fast(model: &DarwinModel) -> Result<BranchEnsemble> {
    let d = model.d;
    let n = model.n_ensubs();
    let mut branch_states = Vec::with_capacity(d);
    let mut system_spin_branch = Vec::with_capacity(d);
    let mut approx_error = Vec::with_capacity(d);
    let mut offdiag_norm = initial_offdiag_norm(model);
    let mut non_decohering = 0usize;

    for ensub in &model.ensubs {
        let expect = env_expectation(ensub);
        let delta = 1.0 - expect * expect;
        let decay = 1.0 - delta * ensub.coupling.theta.sin().powi(2);
        if delta * ensub.coupling.theta.sin().powi(2) < 1e-12 {
            non_decohering += 1;
        }
        let home = ensub.home_site;
        for k in 0..d {
            for l in 0..d {
                if k != l && (k == home || l == home) {
                    offdiag_norm[(k, l)] *= decay.max(0.0).sqrt();
                }
            }
        }
    }

    for i in 0..d {
        let mut states = Vec::with_capacity(n);
        let mut r = model.system_spin.bloch()?;
        let mut err = 0.0;
        for ensub in &model.ensubs {
            if ensub.home_site != i {
                states.push(ensub.initial_spin.clone());
                continue;
            }
            let theta = ensub.coupling.theta;
            let (c2, s2) = (theta.cos().powi(2), theta.sin().powi(2));
            let sigma = ensub.coupling.env_obs.matrix();
            let rho = ensub.initial_spin.matrix();
            let perturbed = rho * Complex64::new(c2, 0.0)
                + (&sigma * rho * &sigma) * Complex64::new(s2, 0.0);
            states.push(DensityOperator::new_unchecked(vec![2], perturbed));

            err += norm(r) * (2.0 * theta).sin().abs();
            r = bloch_update(&PropositionInputs {
                r,
                s_hat: ensub.coupling.sys_obs,
                theta,
                env_expect: env_expectation(ensub),
            });
        }
        branch_states.push(states);
        system_spin_branch.push(DensityOperator::from_bloch(r)?);
        approx_error.push(err);
    }

    let ens = BranchEnsemble {
        branch_probs: model.branch_probs(),
        ensub_ids: (0..n).collect(),
        branch_states,
        system_spin_branch,
        offdiag_norm,
        approx_error,
        non_decohering_steps: non_decohering,
    };
    ens.check();
    Ok(ens)
}

/// Drops the roster-indexed en-subs whose flag is set and recomputes the
/// coherence bounds: only the *discarded* (traced-out) members homed at k or l
/// now contribute decay factors, since the kept members' interactions are
/// norm-preserving on the retained state.
pub fn discard_ensemble(
    model: &DarwinModel,
    ens: &BranchEnsemble,
    discard: &[bool],
) -> Result<BranchEnsemble> {
    if discard.len() != model.n_ensubs() {
        return Err(Error::InvalidArgument(format!(
            "{} discard flags for {} en-subs",
            discard.len(),
            model.n_ensubs()
        )));
    }
    let mut offdiag_norm = initial_offdiag_norm(model);
    for (e, ensub) in model.ensubs.iter().enumerate() {
        let was_present = ens.ensub_ids.contains(&e);
        if !discard[e] && was_present {
            continue;
        }
        let expect = env_expectation(ensub);
        let delta = 1.0 - expect * expect;
        let decay = (1.0 - delta * ensub.coupling.theta.sin().powi(2)).max(0.0);
        let home = ensub.home_site;
        for k in 0..model.d {
            for l in 0..model.d {
                if k != l && (k == home || l == home) {
                    offdiag_norm[(k, l)] *= decay.sqrt();
                }
            }
        }
    }

    let keep: Vec<usize> = (0..ens.ensub_ids.len())
        .filter(|&j| !discard[ens.ensub_ids[j]])
        .collect();
    Ok(BranchEnsemble {
        branch_probs: ens.branch_probs.clone(),
        ensub_ids: keep.iter().map(|&j| ens.ensub_ids[j]).collect(),
        branch_states: ens
            .branch_states
            .iter()
            .map(|states| keep.iter().map(|&j| states[j].clone()).collect())
            .collect(),
        system_spin_branch: ens.system_spin_branch.clone(),
        offdiag_norm,
        approx_error: ens.approx_error.clone(),
        non_decohering_steps: ens.non_decohering_steps,
    })
}

/// Deviation summary from [`props_oracle_run`].
#[derive(Debug, Clone, Copy)]
pub struct PropsReport {
    pub trials: usize,
    /// Bloch update vs two-qubit partial-trace oracle (max abs component).
    pub max_bloch_vector_dev: f64,
    /// ||r'||^2 from the vector update vs the closed-form scalar law.
    pub max_bloch_norm_dev: f64,
    /// Coherence update vs dense one-sided evolution (max abs entry).
    pub max_omega_entry_dev: f64,
    /// Coherence norm vs the (1 - delta sin^2 theta) law.
    pub max_omega_norm_dev: f64,
}

impl PropsReport {
    pub fn max_deviation(&self) -> f64 {
        self.max_bloch_vector_dev
            .max(self.max_bloch_norm_dev)
            .max(self.max_omega_entry_dev)
            .max(self.max_omega_norm_dev)
    }
}

/// Partial trace over the second qubit of a 4x4 operator that need not be a
/// density matrix (the coherence blocks are not).
fn trace_out_second(m: &CMatrix) -> CMatrix {
    CMatrix::from_fn(2, 2, |a, b| m[(2 * a, 2 * b)] + m[(2 * a + 1, 2 * b + 1)])
}

/// Runs `trials` random instances of both single-step update rules against
/// dense two-qubit arithmetic and reports the worst deviations. This is the
/// production backend of the `props` CLI subcommand as well as the validation
/// oracle for the fast engine's primitives.
pub fn props_oracle_run(trials: usize, seed: u64) -> Result<PropsReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PropsReport {
        trials,
        max_bloch_vector_dev: 0.0,
        max_bloch_norm_dev: 0.0,
        max_omega_entry_dev: 0.0,
        max_omega_norm_dev: 0.0,
    };

    for _ in 0..trials {
        let rho_s = random_qubit_state(&mut rng, 1.0);
        let rho_e = random_qubit_state(&mut rng, 1.0);
        let sys_obs = SpinObservable::random(&mut rng);
        let env_obs = SpinObservable::random(&mut rng);
        let theta = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let cpl = CouplingSpec::new(theta, sys_obs, env_obs)?;
        let env_expect = trace(&(env_obs.matrix() * rho_e.matrix())).re;
        let inp = PropositionInputs {
            r: rho_s.bloch()?,
            s_hat: sys_obs,
            theta: cpl.theta,
            env_expect,
        };

        let u = crate::spin::interaction_unitary(&cpl);
        let joint = DensityOperator::new_unchecked(
            vec![2, 2],
            &u * kron(rho_s.matrix(), rho_e.matrix()) * u.adjoint(),
        );
        let oracle_r = partial_trace(&joint, &[0])?.bloch()?;
        let fast_r = bloch_update(&inp);
        for a in 0..3 {
            report.max_bloch_vector_dev =
                report.max_bloch_vector_dev.max((fast_r[a] - oracle_r[a]).abs());
        }
        report.max_bloch_norm_dev = report
            .max_bloch_norm_dev
            .max((dot(fast_r, fast_r) - bloch_norm_law(&inp)).abs());

        let c = CMatrix::from_fn(2, 2, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let dense = trace_out_second(&(&u * kron(&c, rho_e.matrix())));
        let (fast_c, normsq) = omega_update_normsq(&c, cpl.theta, env_expect, &sys_obs);
        for a in 0..2 {
            for b in 0..2 {
                report.max_omega_entry_dev = report
                    .max_omega_entry_dev
                    .max((fast_c[(a, b)] - dense[(a, b)]).norm());
            }
        }
        let want: f64 = c.iter().map(|z| z.norm_sqr()).sum::<f64>()
            * (1.0 - inp.delta() * cpl.theta.sin().powi(2));
        report.max_omega_norm_dev = report.max_omega_norm_dev.max((normsq - want).abs());
    }
    Ok(report)
}

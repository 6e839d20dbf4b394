//! Fragmentation of the environment and objectivity diagnostics.
//!
//! The retained en-subs are dealt into fragments with equal proportions from
//! every macro-fraction; each fragment then gets a branch-distinguishability
//! fidelity matrix (computed factor-wise, never assembling the 2^|F| state),
//! a Holevo information value (dense, capped), and the whole run a
//! spectrum-broadcast-structure verdict at a stated fidelity threshold.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::darwinism::{BranchEnsemble, DarwinModel};
use crate::error::{Error, Result};
use crate::qmath::{fidelity, von_neumann_entropy, DensityOperator};

/// Which fragment, if any, each roster en-sub belongs to.
#[derive(Debug, Clone)]
pub struct FragmentSpec {
    pub n_fragments: usize,
    /// Indexed by roster id; `None` marks inaccessible (discarded) en-subs.
    pub assignment: Vec<Option<usize>>,
    pub seed: u64,
}

impl FragmentSpec {
    /// Roster ids of fragment `k`, in roster order.
    pub fn members(&self, k: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, a)| **a == Some(k))
            .map(|(e, _)| e)
            .collect()
    }
}

/// Shuffles each macro-fraction's accessible en-subs with a seeded generator
/// and deals them round-robin, so every fragment draws near-equal counts
/// (difference at most one) from every macro-fraction.
pub fn partition_fragments(model: &DarwinModel, n: usize, seed: u64) -> Result<FragmentSpec> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one fragment".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![None; model.n_ensubs()];
    for site in 0..model.d {
        let mut accessible: Vec<usize> = model
            .macro_fraction(site)
            .into_iter()
            .filter(|&e| !model.ensubs[e].discarded)
            .collect();
        if accessible.len() < n {
            return Err(Error::InvalidArgument(format!(
                "macro-fraction {site} has {} accessible en-subs for {n} fragments",
                accessible.len()
            )));
        }
        accessible.shuffle(&mut rng);
        for (pos, &e) in accessible.iter().enumerate() {
            assignment[e] = Some(pos % n);
        }
    }
    Ok(FragmentSpec {
        n_fragments: n,
        assignment,
        seed,
    })
}

/// One fragment's per-branch conditional spin states, kept factorized.
#[derive(Debug, Clone)]
pub struct FragmentStates {
    /// Roster ids of the members, in roster order.
    pub members: Vec<usize>,
    /// Home site of each member (same order as `members`).
    pub homes: Vec<usize>,
    /// `per_branch[i][m]` is member m's qubit state conditioned on branch i.
    pub per_branch: Vec<Vec<DensityOperator>>,
}

/// Collects fragment `k`'s factors from an evolved (and possibly discarded)
/// ensemble: the member's perturbed state where it is homed at the branch
/// position, its initial state elsewhere.
pub fn fragment_states(
    model: &DarwinModel,
    ens: &BranchEnsemble,
    spec: &FragmentSpec,
    k: usize,
) -> Result<FragmentStates> {
    if k >= spec.n_fragments {
        return Err(Error::InvalidArgument(format!(
            "fragment {k} >= {}",
            spec.n_fragments
        )));
    }
    if spec.assignment.len() != model.n_ensubs() {
        return Err(Error::InvalidArgument(
            "fragment spec does not match the model roster".into(),
        ));
    }
    let mut members = Vec::new();
    let mut homes = Vec::new();
    let mut slots = Vec::new();
    for (slot, &e) in ens.ensub_ids.iter().enumerate() {
        if spec.assignment[e] == Some(k) {
            members.push(e);
            homes.push(model.ensubs[e].home_site);
            slots.push(slot);
        }
    }
    let per_branch = (0..model.d)
        .map(|i| {
            slots
                .iter()
                .map(|&slot| ens.branch_states[i][slot].clone())
                .collect()
        })
        .collect();
    Ok(FragmentStates {
        members,
        homes,
        per_branch,
    })
}

/// Branch-pair fidelity matrix of one fragment, as the product of per-member
/// qubit fidelities. Members homed outside both branches carry identical
/// (initial) factors and contribute an exact factor of one, so they are
/// skipped rather than recomputed.
pub fn fragment_fidelity_matrix(frag: &FragmentStates) -> Result<DMatrix<f64>> {
    let d = frag.per_branch.len();
    let mut out = DMatrix::from_element(d, d, 1.0);
    for i in 0..d {
        for j in (i + 1)..d {
            let mut f = 1.0;
            for (m, &home) in frag.homes.iter().enumerate() {
                if home != i && home != j {
                    continue;
                }
                f *= fidelity(&frag.per_branch[i][m], &frag.per_branch[j][m])?;
            }
            // Round-off can push a product of unit fidelities a few ulps
            // past one; the mathematical range is [0, 1].
            let f = f.clamp(0.0, 1.0);
            out[(i, j)] = f;
            out[(j, i)] = f;
        }
    }
    Ok(out)
}

/// Holevo information S(sum p_i xi_i) - sum p_i S(xi_i) in bits, assembled
/// densely (dimension 2^|F|, checked against `cap`).
pub fn holevo_information(
    probs: &[f64],
    frag: &FragmentStates,
    cap: usize,
) -> Result<f64> {
    let n = frag.members.len();
    if n >= usize::BITS as usize || (1usize << n) > cap {
        return Err(Error::ResourceCap {
            needed: 1usize << n.min(usize::BITS as usize - 1),
            cap,
        });
    }
    if probs.len() != frag.per_branch.len() {
        return Err(Error::InvalidArgument(
            "probability vector does not match the branch count".into(),
        ));
    }
    let assembled: Vec<DensityOperator> = frag
        .per_branch
        .iter()
        .map(|factors| {
            factors.iter().fold(
                DensityOperator::new_unchecked(vec![1], crate::qmath::identity(1)),
                |acc, f| acc.tensor(f),
            )
        })
        .collect();
    let dim = 1usize << n;
    let mut avg = crate::qmath::CMatrix::zeros(dim, dim);
    let mut conditional = 0.0;
    for (i, xi) in assembled.iter().enumerate() {
        avg += xi.matrix() * num_complex::Complex64::new(probs[i], 0.0);
        conditional += probs[i] * von_neumann_entropy(xi)?;
    }
    let avg = DensityOperator::new_unchecked(vec![dim], avg);
    Ok(von_neumann_entropy(&avg)? - conditional)
}

/// Consensus observation sampling: each trial draws one branch index with the
/// Born weights, and by construction every observer in the trial reports that
/// same index. Returns empirical frequencies.
pub fn born_sample(probs: &[f64], trials: usize, seed: u64) -> Result<Vec<f64>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 || probs.iter().any(|&p| p < 0.0) {
        return Err(Error::InvalidState("not a probability vector".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; probs.len()];
    for _ in 0..trials {
        let mut u: f64 = rng.gen_range(0.0..1.0);
        let mut pick = probs.len() - 1;
        for (i, &p) in probs.iter().enumerate() {
            if u < p {
                pick = i;
                break;
            }
            u -= p;
        }
        counts[pick] += 1;
    }
    Ok(counts.iter().map(|&c| c as f64 / trials as f64).collect())
}

/// Knobs for [`sbs_check`].
#[derive(Debug, Clone, Copy)]
pub struct SbsOptions {
    /// Distinguishability threshold on cross-branch fidelity and on the
    /// coherence residual.
    pub epsilon: f64,
    pub born_trials: usize,
    pub born_seed: u64,
    /// Dense-dimension cap for the Holevo computation; oversized fragments
    /// report no value instead of failing the run.
    pub holevo_cap: usize,
}

impl Default for SbsOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            born_trials: 100_000,
            born_seed: 0,
            holevo_cap: 1 << 12,
        }
    }
}

/// Everything the objectivity verdict rests on.
#[derive(Debug, Clone)]
pub struct SbsReport {
    pub epsilon: f64,
    pub per_fragment_fidelity: Vec<DMatrix<f64>>,
    pub max_cross_fidelity: f64,
    /// Upper bound on surviving cross-branch coherence, from the ensemble's
    /// discard bookkeeping.
    pub offdiag_residual: f64,
    pub sbs_verdict: bool,
    /// `None` where the fragment exceeds the dense cap.
    pub holevo_bits_per_fragment: Vec<Option<f64>>,
    pub fragment_sizes: Vec<usize>,
    pub born_freqs: Vec<f64>,
}

/// Runs the full diagnostic over every fragment. The ensemble should already
/// have its inaccessible en-subs discarded so the coherence residual reflects
/// the retained state.
pub fn sbs_check(
    model: &DarwinModel,
    ens: &BranchEnsemble,
    spec: &FragmentSpec,
    opts: &SbsOptions,
) -> Result<SbsReport> {
    let probs = &ens.branch_probs;
    let mut per_fragment_fidelity = Vec::with_capacity(spec.n_fragments);
    let mut holevo = Vec::with_capacity(spec.n_fragments);
    let mut sizes = Vec::with_capacity(spec.n_fragments);
    let mut max_cross: f64 = 0.0;
    for k in 0..spec.n_fragments {
        let frag = fragment_states(model, ens, spec, k)?;
        let fmat = fragment_fidelity_matrix(&frag)?;
        for i in 0..model.d {
            for j in (i + 1)..model.d {
                max_cross = max_cross.max(fmat[(i, j)]);
            }
        }
        holevo.push(match holevo_information(probs, &frag, opts.holevo_cap) {
            Ok(bits) => Some(bits),
            Err(Error::ResourceCap { .. }) => None,
            Err(e) => return Err(e),
        });
        sizes.push(frag.members.len());
        per_fragment_fidelity.push(fmat);
    }
    let offdiag_residual = ens.offdiag_norm.max();
    Ok(SbsReport {
        epsilon: opts.epsilon,
        per_fragment_fidelity,
        max_cross_fidelity: max_cross,
        offdiag_residual,
        sbs_verdict: max_cross <= opts.epsilon && offdiag_residual <= opts.epsilon,
        holevo_bits_per_fragment: holevo,
        fragment_sizes: sizes,
        born_freqs: born_sample(probs, opts.born_trials, opts.born_seed)?,
    })
}

fn fmt_f(x: f64) -> String {
    format!("{x:.17e}")
}

impl SbsReport {
    /// Structured text rendering: top-level key-value pairs, then one
    /// indented block per fragment.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("format = sbs-report-v1\n");
        out.push_str(&format!("epsilon = {}\n", fmt_f(self.epsilon)));
        out.push_str(&format!("fragments = {}\n", self.per_fragment_fidelity.len()));
        out.push_str(&format!(
            "max_cross_fidelity = {}\n",
            fmt_f(self.max_cross_fidelity)
        ));
        out.push_str(&format!(
            "offdiag_residual = {}\n",
            fmt_f(self.offdiag_residual)
        ));
        out.push_str(&format!("sbs_verdict = {}\n", self.sbs_verdict));
        out.push_str(&format!(
            "born_freqs = {}\n",
            self.born_freqs
                .iter()
                .map(|p| fmt_f(*p))
                .collect::<Vec<_>>()
                .join(" ")
        ));
        for (k, fmat) in self.per_fragment_fidelity.iter().enumerate() {
            out.push_str(&format!("fragment = {k}\n"));
            out.push_str(&format!("  size = {}\n", self.fragment_sizes[k]));
            match self.holevo_bits_per_fragment[k] {
                Some(bits) => out.push_str(&format!("  holevo_bits = {}\n", fmt_f(bits))),
                None => out.push_str("  holevo_bits = over-cap\n"),
            }
            for i in 0..fmat.nrows() {
                for j in (i + 1)..fmat.ncols() {
                    out.push_str(&format!(
                        "  fidelity = {i} {j} {}\n",
                        fmt_f(fmat[(i, j)])
                    ));
                }
            }
        }
        out
    }

    /// Flat table for plotting: one row per fragment per unordered branch
    /// pair.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fragment,i,i_prime,fidelity\n");
        for (k, fmat) in self.per_fragment_fidelity.iter().enumerate() {
            for i in 0..fmat.nrows() {
                for j in (i + 1)..fmat.ncols() {
                    out.push_str(&format!("{k},{i},{j},{}\n", fmt_f(fmat[(i, j)])));
                }
            }
        }
        out
    }
}

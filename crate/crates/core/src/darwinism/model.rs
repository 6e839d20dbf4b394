//! Model construction and lossless text serialization.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::qmath::{CMatrix, DensityOperator};
use crate::spin::{random_qubit_state, CouplingSpec, SpinObservable};

/// Parameters for [`build_model`].
#[derive(Debug, Clone)]
pub struct ModelConfig {
    /// Number of sites the system is spread over.
    pub d: usize,
    /// En-subs homed at each site (one entry per site).
    pub ensubs_per_site: Vec<usize>,
    /// Coupling strengths are drawn uniformly from this range.
    pub theta_range: (f64, f64),
    /// Initial en-sub Bloch norms are drawn uniformly from [0, this].
    pub bloch_norm_max: f64,
    /// Leading fraction of each macro-fraction flagged as discarded.
    pub discard_fraction: f64,
    /// Site amplitudes; uniform superposition when absent.
    pub amplitudes: Option<Vec<Complex64>>,
    /// Initial system spin; maximally mixed when absent.
    pub system_spin: Option<DensityOperator>,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(d: usize, ensubs_per_site: Vec<usize>, seed: u64) -> Self {
        Self {
            d,
            ensubs_per_site,
            theta_range: (0.3, std::f64::consts::PI - 0.3),
            bloch_norm_max: 0.9,
            discard_fraction: 0.25,
            amplitudes: None,
            system_spin: None,
            seed,
        }
    }
}

/// One environmental subsystem: a spin-1/2 fixed at its home site.
#[derive(Debug, Clone)]
pub struct EnSub {
    pub home_site: usize,
    pub initial_spin: DensityOperator,
    pub coupling: CouplingSpec,
    pub discarded: bool,
}

/// Full experiment description. The en-sub roster order is the interaction
/// order (macro-fraction by macro-fraction), so runs are reproducible.
#[derive(Debug, Clone)]
pub struct DarwinModel {
    pub d: usize,
    pub amplitudes: Vec<Complex64>,
    pub system_spin: DensityOperator,
    pub ensubs: Vec<EnSub>,
    pub rng_seed: u64,
}

impl DarwinModel {
    pub fn n_ensubs(&self) -> usize {
        self.ensubs.len()
    }

    pub fn branch_probs(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Indices of en-subs homed at `site`, in roster order.
    pub fn macro_fraction(&self, site: usize) -> Vec<usize> {
        self.ensubs
            .iter()
            .enumerate()
            .filter(|(_, e)| e.home_site == site)
            .map(|(i, _)| i)
            .collect()
    }

    /// Number of couplings with |sin theta| < 1e-6 (non-decohering).
    pub fn null_couplings(&self) -> usize {
        self.ensubs.iter().filter(|e| e.coupling.is_null()).count()
    }

    fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::InvalidArgument(format!("d = {} < 2", self.d)));
        }
        if self.amplitudes.len() != self.d {
            return Err(Error::InvalidArgument(format!(
                "{} amplitudes for {} sites",
                self.amplitudes.len(),
                self.d
            )));
        }
        let norm: f64 = self.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidState(format!(
                "amplitude norm^2 is {norm}, not 1"
            )));
        }
        if self.system_spin.dim() != 2 {
            return Err(Error::InvalidArgument("system spin must be 2x2".into()));
        }
        for (i, e) in self.ensubs.iter().enumerate() {
            if e.home_site >= self.d {
                return Err(Error::InvalidArgument(format!(
                    "en-sub {i} homed at {} >= d = {}",
                    e.home_site, self.d
                )));
            }
            if e.initial_spin.dim() != 2 {
                return Err(Error::InvalidArgument(format!("en-sub {i} spin not 2x2")));
            }
        }
        Ok(())
    }
}

/// Builds a model deterministically from the seed: observables uniform on the
/// Bloch sphere, theta uniform on the configured range, initial en-sub spins
/// random mixed states (uniform direction, norm uniform in [0, max]).
pub fn build_model(config: &ModelConfig) -> Result<DarwinModel> {
    if config.d < 2 {
        return Err(Error::InvalidArgument(format!("d = {} < 2", config.d)));
    }
    if config.ensubs_per_site.len() != config.d {
        return Err(Error::InvalidArgument(format!(
            "ensubs_per_site has {} entries for d = {}",
            config.ensubs_per_site.len(),
            config.d
        )));
    }
    if config.theta_range.0 > config.theta_range.1 {
        return Err(Error::InvalidArgument(format!(
            "theta range ({}, {}) is empty",
            config.theta_range.0, config.theta_range.1
        )));
    }
    if !(0.0..=1.0).contains(&config.discard_fraction) {
        return Err(Error::InvalidArgument(format!(
            "discard fraction {} outside [0, 1]",
            config.discard_fraction
        )));
    }
    if !(0.0..=1.0).contains(&config.bloch_norm_max) {
        return Err(Error::InvalidArgument(format!(
            "bloch_norm_max {} outside [0, 1]",
            config.bloch_norm_max
        )));
    }

    let amplitudes = match &config.amplitudes {
        Some(a) => a.clone(),
        None => {
            let amp = Complex64::new((1.0 / config.d as f64).sqrt(), 0.0);
            vec![amp; config.d]
        }
    };
    let system_spin = config
        .system_spin
        .clone()
        .unwrap_or_else(DensityOperator::maximally_mixed_qubit);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ensubs = Vec::new();
    for (site, &m) in config.ensubs_per_site.iter().enumerate() {
        let n_discard = (config.discard_fraction * m as f64).ceil() as usize;
        for l in 0..m {
            let theta = if config.theta_range.0 == config.theta_range.1 {
                config.theta_range.0
            } else {
                rng.gen_range(config.theta_range.0..config.theta_range.1)
            };
            let coupling = CouplingSpec::new(
                theta,
                SpinObservable::random(&mut rng),
                SpinObservable::random(&mut rng),
            )?;
            let initial_spin = random_qubit_state(&mut rng, config.bloch_norm_max);
            ensubs.push(EnSub {
                home_site: site,
                initial_spin,
                coupling,
                // The leading en-subs of each macro-fraction (the first to
                // interact) are the inaccessible ones.
                discarded: l < n_discard,
            });
        }
    }

    let model = DarwinModel {
        d: config.d,
        amplitudes,
        system_spin,
        ensubs,
        rng_seed: config.seed,
    };
    model.validate()?;
    Ok(model)
}

// --- text serialization -----------------------------------------------------
//
// One line per item, 18-significant-digit decimals, so round-trips are exact.

fn fmt_f(x: f64) -> String {
    format!("{x:.17e}")
}

fn fmt_c(z: Complex64) -> String {
    format!("{} {}", fmt_f(z.re), fmt_f(z.im))
}

fn fmt_matrix2(m: &CMatrix) -> String {
    (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| fmt_c(m[(i, j)]))
        .collect::<Vec<_>>()
        .join(" ")
}

impl DarwinModel {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("format = darwin-model-v1\n");
        out.push_str(&format!("seed = {}\n", self.rng_seed));
        out.push_str(&format!("d = {}\n", self.d));
        for a in &self.amplitudes {
            out.push_str(&format!("amplitude = {}\n", fmt_c(*a)));
        }
        out.push_str(&format!(
            "system_spin = {}\n",
            fmt_matrix2(self.system_spin.matrix())
        ));
        for e in &self.ensubs {
            let s = e.coupling.sys_obs.bloch();
            let v = e.coupling.env_obs.bloch();
            out.push_str(&format!(
                "ensub = site {} discarded {} theta {} sys {} {} {} env {} {} {} spin {}\n",
                e.home_site,
                u8::from(e.discarded),
                fmt_f(e.coupling.theta),
                fmt_f(s[0]),
                fmt_f(s[1]),
                fmt_f(s[2]),
                fmt_f(v[0]),
                fmt_f(v[1]),
                fmt_f(v[2]),
                fmt_matrix2(e.initial_spin.matrix()),
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |ln: usize, msg: &str| {
            Error::InvalidArgument(format!("model text line {}: {msg}", ln + 1))
        };
        let mut seed = None;
        let mut d = None;
        let mut amplitudes = Vec::new();
        let mut system_spin = None;
        let mut ensubs = Vec::new();

        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(ln, "expected 'key = value'"))?;
            let key = key.trim();
            let value = value.trim();
            let floats = |v: &str| -> Result<Vec<f64>> {
                v.split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|_| bad(ln, "bad float")))
                    .collect()
            };
            match key {
                "format" => {
                    if value != "darwin-model-v1" {
                        return Err(bad(ln, "unknown format"));
                    }
                }
                "seed" => seed = Some(value.parse().map_err(|_| bad(ln, "bad seed"))?),
                "d" => d = Some(value.parse().map_err(|_| bad(ln, "bad d"))?),
                "amplitude" => {
                    let f = floats(value)?;
                    if f.len() != 2 {
                        return Err(bad(ln, "amplitude needs 2 floats"));
                    }
                    amplitudes.push(Complex64::new(f[0], f[1]));
                }
                "system_spin" => system_spin = Some(parse_matrix2(&floats(value)?, ln)?),
                "ensub" => ensubs.push(parse_ensub(value, ln)?),
                other => return Err(bad(ln, &format!("unknown key '{other}'"))),
            }
        }

        let model = DarwinModel {
            d: d.ok_or_else(|| Error::InvalidArgument("model text: missing d".into()))?,
            amplitudes,
            system_spin: system_spin
                .ok_or_else(|| Error::InvalidArgument("model text: missing system_spin".into()))?,
            ensubs,
            rng_seed: seed
                .ok_or_else(|| Error::InvalidArgument("model text: missing seed".into()))?,
        };
        model.validate()?;
        Ok(model)
    }
}

fn parse_matrix2(f: &[f64], ln: usize) -> Result<DensityOperator> {
    if f.len() != 8 {
        return Err(Error::InvalidArgument(format!(
            "model text line {}: 2x2 matrix needs 8 floats",
            ln + 1
        )));
    }
    let m = CMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(f[0], f[1]),
            Complex64::new(f[2], f[3]),
            Complex64::new(f[4], f[5]),
            Complex64::new(f[6], f[7]),
        ],
    );
    DensityOperator::new(vec![2], m)
}

fn parse_ensub(value: &str, ln: usize) -> Result<EnSub> {
    let bad = |msg: &str| Error::InvalidArgument(format!("model text line {}: {msg}", ln + 1));
    let toks: Vec<&str> = value.split_whitespace().collect();
    // site N discarded B theta T sys X Y Z env X Y Z spin <8 floats>
    if toks.len() != 23
        || toks[0] != "site"
        || toks[2] != "discarded"
        || toks[4] != "theta"
        || toks[6] != "sys"
        || toks[10] != "env"
        || toks[14] != "spin"
    {
        return Err(bad("malformed ensub record"));
    }
    let f = |t: &str| t.parse::<f64>().map_err(|_| bad("bad float"));
    let sys = SpinObservable::new([f(toks[7])?, f(toks[8])?, f(toks[9])?])?;
    let env = SpinObservable::new([f(toks[11])?, f(toks[12])?, f(toks[13])?])?;
    let spin_floats: Vec<f64> = toks[15..].iter().map(|t| f(t)).collect::<Result<_>>()?;
    Ok(EnSub {
        home_site: toks[1].parse().map_err(|_| bad("bad site"))?,
        initial_spin: parse_matrix2(&spin_floats, ln)?,
        coupling: CouplingSpec::new(f(toks[5])?, sys, env)?,
        discarded: toks[3] == "1",
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_environment_is_allowed() {
        let model = build_model(&ModelConfig::new(2, vec![0, 0], 1)).unwrap();
        assert_eq!(model.n_ensubs(), 0);
    }

    #[test]
    fn same_seed_same_model() {
        let cfg = ModelConfig::new(3, vec![2, 3, 1], 99);
        let a = build_model(&cfg).unwrap();
        let b = build_model(&cfg).unwrap();
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn observable_directions_are_uniform() {
        // Monte Carlo uniformity: the mean direction over 10^4 samples is
        // close to zero for a rotation-invariant measure.
        let cfg = ModelConfig::new(2, vec![5000, 5000], 7);
        let model = build_model(&cfg).unwrap();
        let mut mean = [0.0f64; 3];
        for e in &model.ensubs {
            let b = e.coupling.sys_obs.bloch();
            for k in 0..3 {
                mean[k] += b[k];
            }
        }
        let n = model.n_ensubs() as f64;
        let norm = (mean.iter().map(|x| (x / n).powi(2)).sum::<f64>()).sqrt();
        assert!(norm < 0.1, "mean direction norm {norm}");
    }

    #[test]
    fn discard_flags_lead_each_macro_fraction() {
        let model = build_model(&ModelConfig::new(2, vec![8, 4], 3)).unwrap();
        for site in 0..2 {
            let frac = model.macro_fraction(site);
            let discarded: Vec<bool> = frac.iter().map(|&i| model.ensubs[i].discarded).collect();
            let n_disc = discarded.iter().filter(|&&x| x).count();
            assert_eq!(n_disc, (0.25 * frac.len() as f64).ceil() as usize);
            assert!(discarded[..n_disc].iter().all(|&x| x));
        }
    }

    #[test]
    fn text_round_trip_is_lossless() {
        let model = build_model(&ModelConfig::new(2, vec![3, 2], 42)).unwrap();
        let text = model.to_text();
        let back = DarwinModel::from_text(&text).unwrap();
        assert_eq!(text, back.to_text());
        assert_eq!(model.ensubs.len(), back.ensubs.len());
        for (a, b) in model.ensubs.iter().zip(&back.ensubs) {
            assert_eq!(a.coupling.theta.to_bits(), b.coupling.theta.to_bits());
            for (x, y) in a
                .initial_spin
                .matrix()
                .iter()
                .zip(b.initial_spin.matrix().iter())
            {
                assert_eq!(x.re.to_bits(), y.re.to_bits());
                assert_eq!(x.im.to_bits(), y.im.to_bits());
            }
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = DarwinModel::from_text("format = darwin-model-v1\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(build_model(&ModelConfig::new(1, vec![1], 0)).is_err());
        assert!(build_model(&ModelConfig::new(2, vec![1], 0)).is_err());
        let mut cfg = ModelConfig::new(2, vec![1, 1], 0);
        cfg.discard_fraction = 1.5;
        assert!(build_model(&cfg).is_err());
    }
}

//! Run configuration: a flat key-value file with `[model]` and `[run]`
//! sections, every key optional, unknown keys rejected with the offending
//! line number. Command-line flags override file values.

use std::path::{Path, PathBuf};

use num_complex::Complex64;

/// Fully resolved run parameters; the same struct drives every subcommand.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub epsilon: f64,
    pub trials: usize,
    pub cap_dim: usize,
    pub d: usize,
    pub ensubs_per_site: Vec<usize>,
    pub theta_range: (f64, f64),
    pub bloch_norm_max: f64,
    pub discard_fraction: f64,
    pub fragments: usize,
    pub amplitudes: Option<Vec<Complex64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            epsilon: 0.01,
            trials: 100_000,
            cap_dim: 1 << 14,
            d: 2,
            ensubs_per_site: vec![40, 40],
            theta_range: (0.3, std::f64::consts::PI - 0.3),
            bloch_norm_max: 0.9,
            discard_fraction: 0.25,
            fragments: 3,
            amplitudes: None,
        }
    }
}

fn bad(path: &Path, ln: usize, msg: &str) -> String {
    format!("{}:{}: {msg}", path.display(), ln + 1)
}

impl RunConfig {
    /// Applies a config file on top of the defaults.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg = Self::default();
        let mut section = String::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                match name {
                    "model" | "run" => section = name.to_string(),
                    other => return Err(bad(path, ln, &format!("unknown section [{other}]"))),
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(path, ln, "expected 'key = value'"))?;
            let (key, value) = (key.trim(), value.trim());
            let int = |v: &str| -> Result<usize, String> {
                v.parse().map_err(|_| bad(path, ln, "expected an integer"))
            };
            let float = |v: &str| -> Result<f64, String> {
                v.parse().map_err(|_| bad(path, ln, "expected a number"))
            };
            match (section.as_str(), key) {
                ("model", "d") => cfg.d = int(value)?,
                ("model", "ensubs_per_site") => {
                    cfg.ensubs_per_site = value
                        .split_whitespace()
                        .map(int)
                        .collect::<Result<_, _>>()?;
                }
                ("model", "theta_min") => cfg.theta_range.0 = float(value)?,
                ("model", "theta_max") => cfg.theta_range.1 = float(value)?,
                ("model", "bloch_norm_max") => cfg.bloch_norm_max = float(value)?,
                ("model", "discard_fraction") => cfg.discard_fraction = float(value)?,
                ("model", "amplitudes") => {
                    let f: Vec<f64> = value
                        .split_whitespace()
                        .map(float)
                        .collect::<Result<_, _>>()?;
                    if f.len() % 2 != 0 {
                        return Err(bad(path, ln, "amplitudes need re/im pairs"));
                    }
                    cfg.amplitudes =
                        Some(f.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect());
                }
                ("run", "seed") => {
                    cfg.seed = value
                        .parse()
                        .map_err(|_| bad(path, ln, "expected an integer"))?;
                }
                ("run", "epsilon") => cfg.epsilon = float(value)?,
                ("run", "trials") => cfg.trials = int(value)?,
                ("run", "cap_dim") => cfg.cap_dim = int(value)?,
                ("run", "fragments") => cfg.fragments = int(value)?,
                ("", k) => return Err(bad(path, ln, &format!("key '{k}' outside any section"))),
                (s, k) => return Err(bad(path, ln, &format!("unknown key '{k}' in [{s}]"))),
            }
        }
        cfg.validate().map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.d < 2 {
            return Err(format!("d = {} < 2", self.d));
        }
        if self.ensubs_per_site.len() != self.d {
            return Err(format!(
                "ensubs_per_site has {} entries for d = {}",
                self.ensubs_per_site.len(),
                self.d
            ));
        }
        if self.theta_range.0 > self.theta_range.1 {
            return Err("theta_min exceeds theta_max".into());
        }
        if !(0.0..=1.0).contains(&self.discard_fraction) {
            return Err(format!("discard_fraction {} outside [0, 1]", self.discard_fraction));
        }
        if !(0.0..=1.0).contains(&self.bloch_norm_max) {
            return Err(format!("bloch_norm_max {} outside [0, 1]", self.bloch_norm_max));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(format!("epsilon {} outside [0, 1]", self.epsilon));
        }
        if self.trials == 0 {
            return Err("trials must be positive".into());
        }
        if self.fragments == 0 {
            return Err("fragments must be positive".into());
        }
        if let Some(a) = &self.amplitudes {
            if a.len() != self.d {
                return Err(format!("{} amplitudes for d = {}", a.len(), self.d));
            }
            let norm: f64 = a.iter().map(|z| z.norm_sqr()).sum();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(format!("amplitude norm^2 is {norm}, not 1"));
            }
        }
        Ok(())
    }

    /// The provenance block embedded at the top of every artifact.
    pub fn resolved_text(&self, command: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("# command = {command}\n"));
        out.push_str(&format!("# seed = {}\n", self.seed));
        out.push_str(&format!("# d = {}\n", self.d));
        out.push_str(&format!(
            "# ensubs_per_site = {}\n",
            self.ensubs_per_site
                .iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        ));
        out.push_str(&format!(
            "# theta_range = {:.17e} {:.17e}\n",
            self.theta_range.0, self.theta_range.1
        ));
        out.push_str(&format!("# bloch_norm_max = {:.17e}\n", self.bloch_norm_max));
        out.push_str(&format!(
            "# discard_fraction = {:.17e}\n",
            self.discard_fraction
        ));
        out.push_str(&format!("# fragments = {}\n", self.fragments));
        out.push_str(&format!("# epsilon = {:.17e}\n", self.epsilon));
        out.push_str(&format!("# trials = {}\n", self.trials));
        out.push_str(&format!("# cap_dim = {}\n", self.cap_dim));
        match &self.amplitudes {
            Some(a) => out.push_str(&format!(
                "# amplitudes = {}\n",
                a.iter()
                    .map(|z| format!("{:.17e} {:.17e}", z.re, z.im))
                    .collect::<Vec<_>>()
                    .join(" ")
            )),
            None => out.push_str("# amplitudes = uniform\n"),
        }
        out
    }
}

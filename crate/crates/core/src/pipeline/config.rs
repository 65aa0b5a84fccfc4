//! Plain-text `key = value` configuration with one section per stage.
//! Every key has a default, so an empty file is a complete configuration.

use std::fmt::Write as _;

use crate::detect::{check_theta, AlignmentParams, Method};
use crate::error::{Error, Result};
use crate::eval::{DetectionSettings, EvalGrid};
use crate::geohash::check_precision;
use crate::ibdd::SupportMode;
use crate::preprocess::PreprocessConfig;
use crate::region::RegionConfig;
use crate::synth::{CorpusSpec, NoiseModel};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub region: RegionConfig,
    pub eta: usize,
    pub precision: u8,
    pub theta: f64,
    pub theta_prime: f64,
    pub alignment: AlignmentParams,
    pub support_mode: SupportMode,
    pub method: Method,
    pub noise: NoiseModel,
    pub corpus: CorpusSpec,
    pub seed: u64,
    pub grid: EvalGrid,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            preprocess: PreprocessConfig::default(),
            region: RegionConfig::default(),
            eta: 1,
            precision: 18,
            theta: 0.40,
            theta_prime: 0.10,
            alignment: AlignmentParams::default(),
            support_mode: SupportMode::Substring,
            method: Method::Proposed,
            noise: NoiseModel::default(),
            corpus: CorpusSpec::default(),
            seed: 42,
            grid: EvalGrid::default(),
        }
    }
}

fn list<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

fn parse_list<T: std::str::FromStr>(value: &str) -> Option<Vec<T>> {
    value.split(',').map(|s| s.trim().parse().ok()).collect()
}

impl PipelineConfig {
    /// Parse a configuration file; unset keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            cfg.set(&section, key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, e)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, value: &str) -> std::result::Result<(), String> {
        let bad = || format!("bad value {value:?} for {section}.{key}");
        let num = || value.parse::<f64>().map_err(|_| bad());
        match (section, key) {
            ("preprocess", "epsilon") => self.preprocess.epsilon = num()?,
            ("preprocess", "gamma") => self.preprocess.gamma = num()?,
            ("preprocess", "xi_prime") => self.preprocess.xi_prime = num()?,
            ("preprocess", "alpha") => self.preprocess.alpha = num()?,
            ("preprocess", "max_abs_accel") => self.preprocess.max_abs_accel = num()?,
            ("region", "tau") => self.region.tau = num()?,
            ("region", "xi_double_prime") => self.region.xi_double_prime = num()?,
            ("mining", "eta") => self.eta = value.parse().map_err(|_| bad())?,
            ("geohash", "precision") => self.precision = value.parse().map_err(|_| bad())?,
            ("detect", "theta") => self.theta = num()?,
            ("detect", "method") => self.method = value.parse().map_err(|_| bad())?,
            ("detect", "match_score") => self.alignment.match_score = num()?,
            ("detect", "mismatch_score") => self.alignment.mismatch_score = num()?,
            ("detect", "gap_open") => self.alignment.gap_open = num()?,
            ("detect", "gap_extend") => self.alignment.gap_extend = num()?,
            ("ibdd", "theta_prime") => self.theta_prime = num()?,
            ("ibdd", "support") => self.support_mode = value.parse().map_err(|_| bad())?,
            ("synth", "seed") => self.seed = value.parse().map_err(|_| bad())?,
            ("synth", "dt_base") => self.noise.dt_base = num()?,
            ("synth", "dt_noise") => self.noise.dt_noise = num()?,
            ("synth", "speed_mean") => self.noise.speed_mean = num()?,
            ("synth", "speed_sd") => self.noise.speed_sd = num()?,
            ("synth", "pos_noise_sd") => self.noise.pos_noise_sd = num()?,
            ("synth", "stay_s") => self.corpus.stay_s = num()?,
            ("synth", "gap_s") => self.corpus.gap_s = num()?,
            ("synth", "person_id") => self.corpus.person_id = value.to_string(),
            ("eval", "precisions") => self.grid.precisions = parse_list(value).ok_or_else(bad)?,
            ("eval", "thetas") => self.grid.thetas = parse_list(value).ok_or_else(bad)?,
            ("eval", "theta_primes") => self.grid.theta_primes = parse_list(value).ok_or_else(bad)?,
            _ => return Err(format!("unknown key {section}.{key}")),
        }
        Ok(())
    }

    /// Check every cross-parameter constraint; the message names the
    /// violated inequality.
    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.region.validate()?;
        self.alignment.validate()?;
        self.noise.validate()?;
        if self.eta < 1 {
            return Err(Error::Config(format!("eta >= 1 violated (eta = {})", self.eta)));
        }
        check_precision(self.precision)?;
        check_theta("theta", self.theta)?;
        check_theta("theta_prime", self.theta_prime)?;
        for &p in &self.grid.precisions {
            check_precision(p)?;
        }
        for &t in &self.grid.thetas {
            check_theta("theta", t)?;
        }
        for &t in &self.grid.theta_primes {
            check_theta("theta_prime", t)?;
        }
        if self.corpus.gap_s < self.preprocess.epsilon {
            return Err(Error::Config(format!(
                "gap_s >= epsilon violated ({} < {})",
                self.corpus.gap_s, self.preprocess.epsilon
            )));
        }
        if !(self.corpus.stay_s > self.region.tau) {
            return Err(Error::Config(format!("stay_s > tau violated ({} <= {})", self.corpus.stay_s, self.region.tau)));
        }
        Ok(())
    }

    pub fn settings(&self) -> DetectionSettings {
        DetectionSettings {
            preprocess: self.preprocess,
            region: self.region,
            eta: self.eta,
            alignment: self.alignment,
            support_mode: self.support_mode,
        }
    }

    /// The configuration as a complete, re-parseable file.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = &self.preprocess;
        let _ = writeln!(s, "[preprocess]");
        let _ = writeln!(s, "epsilon = {}\ngamma = {}\nxi_prime = {}\nalpha = {}\nmax_abs_accel = {}", p.epsilon, p.gamma, p.xi_prime, p.alpha, p.max_abs_accel);
        let _ = writeln!(s, "\n[region]\ntau = {}\nxi_double_prime = {}", self.region.tau, self.region.xi_double_prime);
        let _ = writeln!(s, "\n[mining]\neta = {}", self.eta);
        let _ = writeln!(s, "\n[geohash]\nprecision = {}", self.precision);
        let a = &self.alignment;
        let _ = writeln!(
            s,
            "\n[detect]\nmethod = {}\ntheta = {}\nmatch_score = {}\nmismatch_score = {}\ngap_open = {}\ngap_extend = {}",
            self.method, self.theta, a.match_score, a.mismatch_score, a.gap_open, a.gap_extend
        );
        let support = match self.support_mode {
            SupportMode::Substring => "substring",
            SupportMode::Subsequence => "subsequence",
        };
        let _ = writeln!(s, "\n[ibdd]\ntheta_prime = {}\nsupport = {}", self.theta_prime, support);
        let n = &self.noise;
        let _ = writeln!(
            s,
            "\n[synth]\nseed = {}\nperson_id = {}\ndt_base = {}\ndt_noise = {}\nspeed_mean = {}\nspeed_sd = {}\npos_noise_sd = {}\nstay_s = {}\ngap_s = {}",
            self.seed, self.corpus.person_id, n.dt_base, n.dt_noise, n.speed_mean, n.speed_sd, n.pos_noise_sd, self.corpus.stay_s, self.corpus.gap_s
        );
        let g = &self.grid;
        let _ = writeln!(
            s,
            "\n[eval]\nprecisions = {}\nthetas = {}\ntheta_primes = {}",
            list(&g.precisions),
            list(&g.thetas),
            list(&g.theta_primes)
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(PipelineConfig::parse("").unwrap(), PipelineConfig::default());
        assert_eq!(PipelineConfig::parse("# nothing\n\n").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn text_roundtrip() {
        let mut cfg = PipelineConfig { theta: 0.6, support_mode: SupportMode::Subsequence, ..Default::default() };
        cfg.grid.precisions = vec![17];
        assert_eq!(PipelineConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn overrides_and_comments() {
        let cfg = PipelineConfig::parse("[detect]\ntheta = 0.2 # low\n[geohash]\nprecision=17\n").unwrap();
        assert_eq!((cfg.theta, cfg.precision), (0.2, 17));
    }

    #[test]
    fn violations_name_the_inequality() {
        let cases = [
            ("[preprocess]\nxi_prime = 150", "xi_prime < alpha"),
            ("[preprocess]\nalpha = 600", "alpha < gamma"),
            ("[detect]\ntheta = 0", "0 < theta <= 1"),
            ("[ibdd]\ntheta_prime = 1.5", "0 < theta_prime <= 1"),
            ("[mining]\neta = 0", "eta >= 1"),
            ("[geohash]\nprecision = 40", "precision"),
            ("[eval]\nthetas = 0.2, 2", "0 < theta <= 1"),
        ];
        for (text, needle) in cases {
            let err = PipelineConfig::parse(text).unwrap_err().to_string();
            assert!(err.contains(needle), "{text:?}: {err}");
        }
    }

    #[test]
    fn unknown_keys_and_bad_values_are_errors() {
        assert!(PipelineConfig::parse("[detect]\nthetaa = 0.3").is_err());
        assert!(PipelineConfig::parse("[detect]\ntheta = abc").is_err());
        assert!(PipelineConfig::parse("[detect]\ntheta 0.3").is_err());
        assert!(PipelineConfig::parse("[detect]\nmethod = magic").is_err());
    }
}

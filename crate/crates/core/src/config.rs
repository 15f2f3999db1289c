//! Versioned TOML configuration of the whole pipeline.

use serde::{Deserialize, Serialize};

use crate::codebook::DEFAULT_K;
use crate::ensemble::{KernelSpec, SvmParams, TrainParams};
use crate::error::{Error, Result};
use crate::evalmetrics::NdcrCosts;
use crate::optflow::{HsParams, DEFAULT_SPEED_SIGMA, DEFAULT_SPEED_THRESHOLD};
use crate::segment::ChanVeseParams;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub flow: FlowConfig,
    pub segment: SegmentConfig,
    pub keyframes: KeyframeConfig,
    pub codebook: CodebookConfig,
    pub ensemble: EnsembleConfig,
    pub eval: EvalConfig,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub hs_lambda: f64,
    pub pyramid_levels: usize,
    pub iterations_per_level: usize,
    pub convergence_eps: f64,
    pub speed_threshold: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    pub cv_lambda: f64,
    /// Negative picks the contour weight from the speed range.
    pub mu: f64,
    pub epsilon: f64,
    pub dt: f64,
    pub max_iters: usize,
    pub stop_tol: f64,
    pub min_area: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeyframeConfig {
    /// Frames between consecutive key frames.
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookConfig {
    pub k: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Rbf,
    Polynomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub c: f64,
    pub kernel: KernelKind,
    pub gamma: f64,
    pub degree: u32,
    pub coef: f64,
    pub t_k: usize,
    pub train_fraction: f64,
    pub kkt_tol: f64,
    pub max_passes: usize,
    /// Training shots are split into this many incremental batches.
    pub batches: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub cost_miss: f64,
    pub cost_fa: f64,
    pub r_target: f64,
    /// Score at or above which a shot counts as a detection.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub shots: usize,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub fps: u32,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            workers: 0,
            flow: FlowConfig::default(),
            segment: SegmentConfig::default(),
            keyframes: KeyframeConfig::default(),
            codebook: CodebookConfig::default(),
            ensemble: EnsembleConfig::default(),
            eval: EvalConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl Default for FlowConfig {
    fn default() -> Self {
        let hs = HsParams::default();
        Self {
            hs_lambda: hs.hs_lambda,
            pyramid_levels: hs.pyramid_levels,
            iterations_per_level: hs.iterations_per_level,
            convergence_eps: hs.convergence_eps,
            speed_threshold: DEFAULT_SPEED_THRESHOLD,
            sigma: DEFAULT_SPEED_SIGMA,
        }
    }
}

impl Default for SegmentConfig {
    fn default() -> Self {
        let cv = ChanVeseParams::default();
        Self {
            cv_lambda: cv.cv_lambda,
            mu: cv.mu.unwrap_or(-1.0),
            epsilon: cv.epsilon,
            dt: cv.dt,
            max_iters: cv.max_iters,
            stop_tol: cv.stop_tol,
            min_area: cv.min_area,
        }
    }
}

impl Default for KeyframeConfig {
    fn default() -> Self {
        Self { step: 2 }
    }
}

impl Default for CodebookConfig {
    fn default() -> Self {
        Self { k: DEFAULT_K, seed: 7 }
    }
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        let t = TrainParams::default();
        Self {
            c: t.c,
            kernel: KernelKind::Rbf,
            gamma: 0.1,
            degree: 2,
            coef: 1.0,
            t_k: t.t_k,
            train_fraction: t.train_fraction,
            kkt_tol: t.kkt_tol,
            max_passes: t.max_passes,
            batches: 2,
            seed: 11,
        }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        let c = NdcrCosts::default();
        Self {
            cost_miss: c.cost_miss,
            cost_fa: c.cost_fa,
            r_target: c.r_target,
            threshold: 0.0,
        }
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            shots: 60,
            width: 64,
            height: 48,
            frames: 12,
            fps: 25,
            seed: 2009,
        }
    }
}

/// Every configuration key with its accepted range.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("version", "1"),
    ("workers", "integer >= 0 (0 = all cores)"),
    ("flow.hs_lambda", "> 0"),
    ("flow.pyramid_levels", "integer >= 1"),
    ("flow.iterations_per_level", "integer >= 1"),
    ("flow.convergence_eps", ">= 0"),
    ("flow.speed_threshold", ">= 0"),
    ("flow.sigma", "> 0"),
    ("segment.cv_lambda", "> 0"),
    ("segment.mu", ">= 0, or negative for automatic"),
    ("segment.epsilon", "> 0"),
    ("segment.dt", "> 0"),
    ("segment.max_iters", "integer >= 1"),
    ("segment.stop_tol", ">= 0"),
    ("segment.min_area", "integer >= 1"),
    ("keyframes.step", "integer >= 1"),
    ("codebook.k", "integer >= 2"),
    ("codebook.seed", "integer >= 0"),
    ("ensemble.c", "> 0"),
    ("ensemble.kernel", "linear | rbf | polynomial"),
    ("ensemble.gamma", "> 0 (rbf)"),
    ("ensemble.degree", "integer >= 1 (polynomial)"),
    ("ensemble.coef", "finite (polynomial)"),
    ("ensemble.t_k", "integer >= 1"),
    ("ensemble.train_fraction", "(0, 1)"),
    ("ensemble.kkt_tol", "> 0"),
    ("ensemble.max_passes", "integer >= 1"),
    ("ensemble.batches", "integer >= 1"),
    ("ensemble.seed", "integer >= 0"),
    ("eval.cost_miss", "> 0"),
    ("eval.cost_fa", "> 0"),
    ("eval.r_target", "> 0 (events per hour)"),
    ("eval.threshold", "[-1, 1]"),
    ("synth.shots", "integer >= 4"),
    ("synth.width", "integer >= 48"),
    ("synth.height", "integer >= 48"),
    ("synth.frames", "integer >= 2"),
    ("synth.fps", "integer >= 1"),
    ("synth.seed", "integer >= 0"),
];

fn check(ok: bool, key: &str, value: impl std::fmt::Display) -> Result<()> {
    if ok {
        return Ok(());
    }
    let range = CONFIG_KEYS.iter().find(|(k, _)| *k == key).map_or("?", |(_, r)| r);
    Err(Error::Config(format!("{key} = {value} is outside {range}")))
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string() + &span_note(&e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    /// Applies `key=value` overrides to a TOML document, then parses it.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            let key = key.trim();
            if !CONFIG_KEYS.iter().any(|(k, _)| *k == key) {
                return Err(Error::Config(format!("unknown configuration key `{key}`")));
            }
            let raw = raw.trim();
            let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            let mut table = &mut doc;
            let mut parts: Vec<&str> = key.split('.').collect();
            let leaf = parts.pop().unwrap();
            for p in parts {
                table = table
                    .entry(p)
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("`{p}` is not a section")))?;
            }
            table.insert(leaf.to_string(), value);
        }
        Self::from_toml(&toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))?)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.version == CONFIG_VERSION, "version", self.version)?;
        let f = &self.flow;
        check(f.hs_lambda > 0.0 && f.hs_lambda.is_finite(), "flow.hs_lambda", f.hs_lambda)?;
        check(f.pyramid_levels >= 1, "flow.pyramid_levels", f.pyramid_levels)?;
        check(f.iterations_per_level >= 1, "flow.iterations_per_level", f.iterations_per_level)?;
        check(f.convergence_eps >= 0.0, "flow.convergence_eps", f.convergence_eps)?;
        check(f.speed_threshold >= 0.0, "flow.speed_threshold", f.speed_threshold)?;
        check(f.sigma > 0.0, "flow.sigma", f.sigma)?;
        let s = &self.segment;
        check(s.cv_lambda > 0.0, "segment.cv_lambda", s.cv_lambda)?;
        check(s.mu.is_finite(), "segment.mu", s.mu)?;
        check(s.epsilon > 0.0, "segment.epsilon", s.epsilon)?;
        check(s.dt > 0.0, "segment.dt", s.dt)?;
        check(s.max_iters >= 1, "segment.max_iters", s.max_iters)?;
        check(s.stop_tol >= 0.0, "segment.stop_tol", s.stop_tol)?;
        check(s.min_area >= 1, "segment.min_area", s.min_area)?;
        check(self.keyframes.step >= 1, "keyframes.step", self.keyframes.step)?;
        check(self.codebook.k >= 2, "codebook.k", self.codebook.k)?;
        let e = &self.ensemble;
        check(e.c > 0.0 && e.c.is_finite(), "ensemble.c", e.c)?;
        check(e.gamma > 0.0 && e.gamma.is_finite(), "ensemble.gamma", e.gamma)?;
        check(e.degree >= 1, "ensemble.degree", e.degree)?;
        check(e.coef.is_finite(), "ensemble.coef", e.coef)?;
        check(e.t_k >= 1, "ensemble.t_k", e.t_k)?;
        check(e.train_fraction > 0.0 && e.train_fraction < 1.0, "ensemble.train_fraction", e.train_fraction)?;
        check(e.kkt_tol > 0.0, "ensemble.kkt_tol", e.kkt_tol)?;
        check(e.max_passes >= 1, "ensemble.max_passes", e.max_passes)?;
        check(e.batches >= 1, "ensemble.batches", e.batches)?;
        let v = &self.eval;
        check(v.cost_miss > 0.0 && v.cost_miss.is_finite(), "eval.cost_miss", v.cost_miss)?;
        check(v.cost_fa > 0.0 && v.cost_fa.is_finite(), "eval.cost_fa", v.cost_fa)?;
        check(v.r_target > 0.0 && v.r_target.is_finite(), "eval.r_target", v.r_target)?;
        check((-1.0..=1.0).contains(&v.threshold), "eval.threshold", v.threshold)?;
        let y = &self.synth;
        check(y.shots >= 4, "synth.shots", y.shots)?;
        check(y.width >= 48, "synth.width", y.width)?;
        check(y.height >= 48, "synth.height", y.height)?;
        check(y.frames >= 2, "synth.frames", y.frames)?;
        check(y.fps >= 1, "synth.fps", y.fps)?;
        Ok(())
    }

    pub fn hs_params(&self) -> HsParams {
        HsParams {
            hs_lambda: self.flow.hs_lambda,
            iterations_per_level: self.flow.iterations_per_level,
            pyramid_levels: self.flow.pyramid_levels,
            convergence_eps: self.flow.convergence_eps,
        }
    }

    pub fn cv_params(&self) -> ChanVeseParams {
        let s = &self.segment;
        ChanVeseParams {
            cv_lambda: s.cv_lambda,
            mu: (s.mu >= 0.0).then_some(s.mu),
            epsilon: s.epsilon,
            dt: s.dt,
            max_iters: s.max_iters,
            stop_tol: s.stop_tol,
            min_area: s.min_area,
        }
    }

    pub fn kernel(&self) -> KernelSpec {
        let e = &self.ensemble;
        match e.kernel {
            KernelKind::Linear => KernelSpec::Linear,
            KernelKind::Rbf => KernelSpec::Rbf { gamma: e.gamma },
            KernelKind::Polynomial => KernelSpec::Polynomial {
                degree: e.degree,
                coef: e.coef,
            },
        }
    }

    pub fn svm_params(&self) -> SvmParams {
        self.train_params().svm()
    }

    pub fn train_params(&self) -> TrainParams {
        let e = &self.ensemble;
        TrainParams {
            c: e.c,
            kernel: self.kernel(),
            t_k: e.t_k,
            train_fraction: e.train_fraction,
            kkt_tol: e.kkt_tol,
            max_passes: e.max_passes,
            seed: e.seed,
        }
    }

    pub fn costs(&self) -> NdcrCosts {
        NdcrCosts {
            cost_miss: self.eval.cost_miss,
            cost_fa: self.eval.cost_fa,
            r_target: self.eval.r_target,
        }
    }
}

fn span_note(e: &toml::de::Error) -> String {
    e.span().map_or(String::new(), |s| format!(" (at byte {})", s.start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn leaf_keys(prefix: &str, t: &toml::Table, out: &mut BTreeSet<String>) {
        for (k, v) in t {
            let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            match v {
                toml::Value::Table(sub) => leaf_keys(&key, sub, out),
                _ => {
                    out.insert(key);
                }
            }
        }
    }

    #[test]
    fn key_table_covers_every_field() {
        let doc: toml::Table = toml::from_str(&PipelineConfig::default().to_toml()).unwrap();
        let mut found = BTreeSet::new();
        leaf_keys("", &doc, &mut found);
        let listed: BTreeSet<String> = CONFIG_KEYS.iter().map(|(k, _)| k.to_string()).collect();
        assert_eq!(found, listed);
    }

    #[test]
    fn defaults_round_trip_and_validate() {
        let d = PipelineConfig::default();
        d.validate().unwrap();
        assert_eq!(PipelineConfig::from_toml(&d.to_toml()).unwrap(), d);
        assert_eq!(PipelineConfig::from_toml("").unwrap(), d);
        assert_eq!(d.codebook.k, 32);
        assert_eq!(d.costs(), NdcrCosts::default());
        assert_eq!(d.cv_params(), ChanVeseParams::default());
        assert_eq!(d.hs_params(), HsParams::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = PipelineConfig::from_toml("[flow]\nhs_lamda = 3.0\n").unwrap_err();
        assert!(matches!(e, Error::Config(_)), "{e}");
        assert!(PipelineConfig::from_toml("colour = 1\n").is_err());
        assert!(PipelineConfig::from_toml_with_overrides("", &["flow.nope=1".into()]).is_err());
    }

    #[test]
    fn ranges_enforced() {
        for bad in [
            "version = 2",
            "[ensemble]\ntrain_fraction = 1.0",
            "[codebook]\nk = 1",
            "[flow]\nhs_lambda = -1.0",
            "[eval]\nthreshold = 2.0",
            "[ensemble]\nkernel = \"sigmoid\"",
        ] {
            assert!(PipelineConfig::from_toml(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn overrides_apply() {
        let cfg = PipelineConfig::from_toml_with_overrides(
            "[codebook]\nk = 16\n",
            &["codebook.k=8".into(), "ensemble.kernel=linear".into(), "flow.hs_lambda = 20".into()],
        )
        .unwrap();
        assert_eq!(cfg.codebook.k, 8);
        assert_eq!(cfg.kernel(), KernelSpec::Linear);
        assert_eq!(cfg.flow.hs_lambda, 20.0);
        assert!(PipelineConfig::from_toml_with_overrides("", &["codebook.k=0".into()]).is_err());
        assert!(PipelineConfig::from_toml_with_overrides("", &["codebook.k".into()]).is_err());
    }
}

//! TOML experiment configs: parsing, validation and typed access with
//! schema defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fmlab_core::disorder::{CouplingLaw, SingleSiteProfile};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{HResult, HarnessError};
use crate::schema::{self, as_f64, lookup, Key};

#[derive(Debug, Clone)]
pub struct Config {
    pub kind: String,
    pub seed: u64,
    /// Seed written in the file, before any override.
    pub file_seed: u64,
    pub out: Option<PathBuf>,
    /// SHA-256 of the config text.
    pub checksum: String,
    table: Table,
    keys: Vec<Key>,
}

impl Config {
    pub fn load(path: &Path) -> HResult<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Config::parse(&text)
    }

    pub fn parse(text: &str) -> HResult<Config> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| HarnessError::Validation(vec![format!("not valid TOML: {}", e.message())]))?;
        let keys = schema::validate_keys(&table).map_err(HarnessError::Validation)?;
        let kind = table["kind"].as_str().unwrap_or_default().to_string();
        let seed = table["seed"].as_integer().unwrap_or(0) as u64;
        let cfg = Config {
            kind,
            seed,
            file_seed: seed,
            out: table.get("out").and_then(Value::as_str).map(PathBuf::from),
            checksum: hex::encode(Sha256::digest(text.as_bytes())),
            table,
            keys,
        };
        let errors = cfg.semantic_errors();
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(HarnessError::Validation(errors))
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Config {
        self.seed = seed;
        self
    }

    fn key(&self, path: &str) -> Option<&Key> {
        self.keys.iter().find(|k| k.path == path)
    }

    /// Value in the file, else the schema default.
    pub fn value(&self, path: &str) -> Option<Value> {
        if let Some(v) = lookup(&self.table, path) {
            return Some(v.clone());
        }
        let d = self.key(path)?.default?;
        let t: Table = toml::from_str(&format!("v = {d}")).ok()?;
        t.get("v").cloned()
    }

    pub fn has(&self, path: &str) -> bool {
        lookup(&self.table, path).is_some()
    }

    pub fn opt_f64(&self, path: &str) -> Option<f64> {
        self.value(path).as_ref().and_then(as_f64)
    }

    pub fn f64(&self, path: &str) -> f64 {
        self.opt_f64(path).unwrap_or_else(|| panic!("{path} missing after validation"))
    }

    pub fn opt_usize(&self, path: &str) -> Option<usize> {
        self.value(path).and_then(|v| v.as_integer()).map(|i| i.max(0) as usize)
    }

    pub fn usize(&self, path: &str) -> usize {
        self.opt_usize(path).unwrap_or_else(|| panic!("{path} missing after validation"))
    }

    pub fn opt_floats(&self, path: &str) -> Option<Vec<f64>> {
        let v = self.value(path)?;
        v.as_array().map(|a| a.iter().filter_map(as_f64).collect())
    }

    pub fn floats(&self, path: &str) -> Vec<f64> {
        self.opt_floats(path).unwrap_or_else(|| panic!("{path} missing after validation"))
    }

    pub fn usizes(&self, path: &str) -> Vec<usize> {
        self.floats(path).into_iter().map(|x| x as usize).collect()
    }

    pub fn opt_str(&self, path: &str) -> Option<String> {
        self.value(path).and_then(|v| v.as_str().map(str::to_string))
    }

    pub fn str(&self, path: &str) -> String {
        self.opt_str(path).unwrap_or_else(|| panic!("{path} missing after validation"))
    }

    pub fn bool(&self, path: &str) -> bool {
        self.value(path).and_then(|v| v.as_bool()).unwrap_or(false)
    }

    pub fn profile(&self) -> Option<SingleSiteProfile> {
        lookup(&self.table, "model.profile").and_then(|v| v.clone().try_into().ok())
    }

    pub fn law(&self) -> Option<CouplingLaw> {
        lookup(&self.table, "model.law").and_then(|v| v.clone().try_into().ok())
    }

    /// Every schema key with its effective value, for the manifest.
    pub fn resolved(&self) -> BTreeMap<String, serde_json::Value> {
        let mut out = BTreeMap::new();
        for k in &self.keys {
            if let Some(v) = self.value(k.path) {
                out.insert(k.path.to_string(), serde_json::to_value(&v).unwrap_or(serde_json::Value::Null));
            }
        }
        out.insert("seed".into(), serde_json::Value::from(self.seed));
        out
    }

    pub fn dim(&self) -> usize {
        if self.kind == "gronwall" {
            self.usize("numeric.dim")
        } else {
            self.usize("model.dim")
        }
    }

    fn semantic_errors(&self) -> Vec<String> {
        let mut errors = Vec::new();
        let has_key = |p: &str| self.key(p).is_some();
        if has_key("model.profile") {
            match lookup(&self.table, "model.profile").cloned().map(Value::try_into::<SingleSiteProfile>) {
                Some(Ok(p)) => {
                    if let Err(e) = p.validate() {
                        errors.push(format!("model.profile: {e}"));
                    }
                }
                Some(Err(e)) => errors.push(format!("model.profile: {}", e.message())),
                None => {}
            }
        }
        if has_key("model.law") {
            match lookup(&self.table, "model.law").cloned().map(Value::try_into::<CouplingLaw>) {
                Some(Ok(l)) => {
                    if let Err(e) = l.validate() {
                        errors.push(format!("model.law: {e}"));
                    }
                }
                Some(Err(e)) => errors.push(format!("model.law: {}", e.message())),
                None => {}
            }
        }
        let dim = if has_key("model.dim") || has_key("numeric.dim") { self.dim() } else { 0 };
        let min_len = |path: &str, n: usize, errors: &mut Vec<String>| {
            if let Some(v) = self.opt_floats(path) {
                if v.len() < n {
                    errors.push(format!("{path}: needs at least {n} entries, got {}", v.len()));
                }
            }
        };
        for p in ["numeric.separations", "numeric.gap_separations"] {
            if has_key(p) {
                min_len(p, 4, &mut errors);
            }
        }
        for p in ["numeric.lengths", "numeric.thresholds"] {
            if has_key(p) && self.kind != "geometry_audit" {
                min_len(p, 2, &mut errors);
            }
        }
        if let Some(t) = self.opt_floats("numeric.thresholds") {
            if t.windows(2).any(|w| w[0] >= w[1]) {
                errors.push("numeric.thresholds: must be strictly increasing".into());
            }
        }
        if has_key("numeric.window") {
            if let Some(w) = self.opt_floats("numeric.window") {
                if w.len() != 2 || w[0] >= w[1] {
                    errors.push(format!("numeric.window: expected [lo, hi] with lo < hi, got {w:?}"));
                }
            }
        }
        for p in ["numeric.x", "numeric.y"] {
            if let Some(v) = self.opt_floats(p) {
                if has_key(p) && dim > 0 && v.len() != dim {
                    errors.push(format!("{p}: expected {dim} coordinates, got {}", v.len()));
                }
            }
        }
        if has_key("model.width") && self.has("model.width") && dim == 1 {
            errors.push("model.width: a strip needs model.dim >= 2".into());
        }
        if has_key("model.layout") && self.str("model.layout") == "surface" {
            let d1 = self.usize("model.surface_dim");
            if dim < 2 || d1 >= dim {
                errors.push(format!("model.surface_dim = {d1}: the surface layout needs 1 <= d1 < d, d = {dim}"));
            }
        }
        if self.kind == "bracketing" && dim >= 2 && !self.has("model.width") {
            errors.push("model.width: bracketing in d >= 2 runs on a strip and needs a width".into());
        }
        if self.kind == "gronwall" && self.has("numeric.rate") == self.has("numeric.tau_fit") {
            errors.push("numeric.rate: give exactly one of numeric.rate and numeric.tau_fit".into());
        }
        errors
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
kind = "decay_profile"
seed = 3
[model]
dim = 1
side = 41
profile = { shape = "box", height = 1.0, side = 1.0 }
law = { law = "uniform", eta_max = 4.0 }
[numeric]
s = 0.25
delta = 0.3
separations = [4, 8, 12, 16]
samples = 100
"#;

    #[test]
    fn defaults_fill_in() {
        let c = Config::parse(MINIMAL).unwrap();
        assert_eq!(c.floats("numeric.eps"), vec![1e-6]);
        assert_eq!(c.str("model.boundary"), "dirichlet");
        assert_eq!(c.f64("model.side"), 41.0);
        assert!(c.resolved().contains_key("numeric.energy_points"));
    }

    #[test]
    fn every_bad_key_is_reported() {
        let text = MINIMAL
            .replace("s = 0.25", "s = 1.2")
            .replace("samples = 100", "samples = 10\nbogus = 1")
            .replace("dim = 1", "dim = 7");
        let Err(HarnessError::Validation(errs)) = Config::parse(&text) else {
            panic!("expected validation failure")
        };
        let joined = errs.join("\n");
        assert!(joined.contains("numeric.s = 1.2") && joined.contains("(0, 1)"), "{joined}");
        assert!(joined.contains("numeric.samples"), "{joined}");
        assert!(joined.contains("numeric.bogus"), "{joined}");
        assert!(joined.contains("model.dim"), "{joined}");
    }

    #[test]
    fn malformed_law_is_named() {
        let text = MINIMAL.replace("eta_max = 4.0 }", "eta_max = -1.0 }");
        let Err(HarnessError::Validation(errs)) = Config::parse(&text) else {
            panic!()
        };
        assert!(errs.iter().any(|e| e.starts_with("model.law")), "{errs:?}");
    }

    #[test]
    fn checksum_tracks_text() {
        let a = Config::parse(MINIMAL).unwrap();
        let b = Config::parse(&format!("{MINIMAL}\n")).unwrap();
        assert_ne!(a.checksum, b.checksum);
        assert_eq!(a.checksum, Config::parse(MINIMAL).unwrap().checksum);
    }
}

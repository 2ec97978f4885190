//! Plain-text `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored; unknown or repeated keys are
//! errors.

use std::path::Path;
use std::str::FromStr;

use crate::data::SyntheticSpec;
use crate::ensemble::TrainConfig;
use crate::error::{Error, Result};

/// Parsed `(key, value, line)` triples.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out: Vec<(String, String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        if out.iter().any(|(seen, _, _)| seen == k) {
            return Err(Error::Config(format!("line {}: duplicate key '{k}'", i + 1)));
        }
        out.push((k.to_string(), v.to_string(), i + 1));
    }
    Ok(out)
}

fn value<T: FromStr>(key: &str, v: &str, line: usize) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("line {line}: invalid value '{v}' for '{key}'")))
}

fn flag(key: &str, v: &str, line: usize) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("line {line}: '{key}' expects true or false, got '{v}'"))),
    }
}

/// Training options plus the columns to drop from input tables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub exclude_columns: Vec<String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (k, v, line) in parse_pairs(text)? {
            cfg.set(&k, &v, line)?;
        }
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn set(&mut self, key: &str, v: &str, line: usize) -> Result<()> {
        let t = &mut self.train;
        let (net, loss, opt, pre) = (&mut t.network, &mut t.loss, &mut t.optimizer, &mut t.preprocess);
        match key {
            "members" => t.members = value(key, v, line)?,
            "batch_size" => t.batch_size = value(key, v, line)?,
            "max_epochs" => t.max_epochs = value(key, v, line)?,
            "patience" => t.patience = value(key, v, line)?,
            "validation_fraction" => t.validation_fraction = value(key, v, line)?,
            "classes" => t.classes = value(key, v, line)?,
            "seed" => t.seed = value(key, v, line)?,
            "parallel" => t.parallel = flag(key, v, line)?,
            "hidden_dim" => net.hidden_dim = value(key, v, line)?,
            "trunk_layers" => net.trunk_layers = value(key, v, line)?,
            "upper_layers" => net.upper_layers = value(key, v, line)?,
            "projection_dim" => net.projection_dim = value(key, v, line)?,
            "dropout" => net.alpha_dropout_rate = value(key, v, line)?,
            "nll_weight" => loss.nll_weight = value(key, v, line)?,
            "aux_weight" => loss.aux_weight = value(key, v, line)?,
            "aux_kind" => loss.aux_kind = v.parse()?,
            "temperature" => loss.temperature = value(key, v, line)?,
            "lr" => opt.lr = value(key, v, line)?,
            "beta1" => opt.beta1 = value(key, v, line)?,
            "beta2" => opt.beta2 = value(key, v, line)?,
            "eps" => opt.eps = value(key, v, line)?,
            "sync_period" => opt.sync_period = value(key, v, line)?,
            "slow_step" => opt.slow_step = value(key, v, line)?,
            "grad_clip" => {
                opt.grad_clip = if v == "none" { None } else { Some(value(key, v, line)?) }
            }
            "quantize" => pre.quantize = flag(key, v, line)?,
            "min_bins" => pre.min_bins = value(key, v, line)?,
            "max_bins" => pre.max_bins = value(key, v, line)?,
            "fixed_bins" => {
                pre.fixed_bins = if v == "none" { None } else { Some(value(key, v, line)?) }
            }
            "exclude_columns" => {
                self.exclude_columns = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            }
            _ => return Err(Error::Config(format!("line {line}: unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Canonical `key=value` echo of every setting.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let t = &self.train;
        let opt_str = |o: Option<String>| o.unwrap_or_else(|| "none".into());
        let pairs: Vec<(&str, String)> = vec![
            ("members", t.members.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("max_epochs", t.max_epochs.to_string()),
            ("patience", t.patience.to_string()),
            ("validation_fraction", t.validation_fraction.to_string()),
            ("classes", t.classes.to_string()),
            ("seed", t.seed.to_string()),
            ("hidden_dim", t.network.hidden_dim.to_string()),
            ("trunk_layers", t.network.trunk_layers.to_string()),
            ("upper_layers", t.network.upper_layers.to_string()),
            ("projection_dim", t.network.projection_dim.to_string()),
            ("dropout", t.network.alpha_dropout_rate.to_string()),
            ("nll_weight", t.loss.nll_weight.to_string()),
            ("aux_weight", t.loss.aux_weight.to_string()),
            ("aux_kind", t.loss.aux_kind.as_str().to_string()),
            ("temperature", t.loss.temperature.to_string()),
            ("lr", t.optimizer.lr.to_string()),
            ("beta1", t.optimizer.beta1.to_string()),
            ("beta2", t.optimizer.beta2.to_string()),
            ("eps", t.optimizer.eps.to_string()),
            ("sync_period", t.optimizer.sync_period.to_string()),
            ("slow_step", t.optimizer.slow_step.to_string()),
            ("grad_clip", opt_str(t.optimizer.grad_clip.map(|v| v.to_string()))),
            ("quantize", t.preprocess.quantize.to_string()),
            ("min_bins", t.preprocess.min_bins.to_string()),
            ("max_bins", t.preprocess.max_bins.to_string()),
            ("fixed_bins", opt_str(t.preprocess.fixed_bins.map(|v| v.to_string()))),
            ("exclude_columns", self.exclude_columns.join(",")),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

/// Synthetic data spec, either inline (`n_train=100,dims=4`) or a config
/// file path.
pub fn parse_synthetic_spec(arg: &str) -> Result<SyntheticSpec> {
    let text = if Path::new(arg).is_file() {
        std::fs::read_to_string(arg).map_err(|e| Error::io(arg, e))?
    } else {
        arg.replace(',', "\n")
    };
    let mut s = SyntheticSpec::default();
    for (k, v, line) in parse_pairs(&text)? {
        match k.as_str() {
            "n_train" => s.n_train = value(&k, &v, line)?,
            "n_in" => s.n_in = value(&k, &v, line)?,
            "n_out" => s.n_out = value(&k, &v, line)?,
            "dims" => s.dims = value(&k, &v, line)?,
            "noise" => s.noise = value(&k, &v, line)?,
            "shift" => s.shift = value(&k, &v, line)?,
            "seed" => s.seed = value(&k, &v, line)?,
            _ => return Err(Error::Config(format!("unknown synthetic spec key '{k}'"))),
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::AuxKind;

    #[test]
    fn parses_comments_and_values() {
        let cfg = RunConfig::parse(
            "# ensemble\nmembers = 3\nhidden_dim=16 # narrow\n\naux_kind = crossentropy\ngrad_clip = 5\nexclude_columns = id, time\nquantize = false\n",
        )
        .unwrap();
        assert_eq!(cfg.train.members, 3);
        assert_eq!(cfg.train.network.hidden_dim, 16);
        assert_eq!(cfg.train.loss.aux_kind, AuxKind::Crossentropy);
        assert_eq!(cfg.train.optimizer.grad_clip, Some(5.0));
        assert_eq!(cfg.exclude_columns, ["id", "time"]);
        assert!(!cfg.train.preprocess.quantize);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in ["unknown = 1", "members", "members = x", "members = 2\nmembers = 3", "validation_fraction = 1.5"] {
            assert!(matches!(RunConfig::parse(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn echo_parses_back() {
        let cfg = RunConfig::parse("members = 4\nlr = 0.001\nexclude_columns = a\nfixed_bins = 8").unwrap();
        let text: String = cfg.to_pairs().iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn synthetic_spec_inline() {
        let s = parse_synthetic_spec("n_train=100, dims=4,shift=2.5,seed=9").unwrap();
        assert_eq!((s.n_train, s.dims, s.shift, s.seed), (100, 4, 2.5, 9));
        assert!(parse_synthetic_spec("rows=3").is_err());
    }
}

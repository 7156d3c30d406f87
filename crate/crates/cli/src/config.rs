//! Flat `key = value` configuration with per-command schemas.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("key {key:?}: {message}")]
    BadValue { key: String, message: String },
    #[error("{0}")]
    Usage(String),
}

/// One `key = value` entry with the line it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

fn valid_key(key: &str) -> bool {
    let mut chars = key.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Parse config text. `#` starts a comment; blank lines are skipped; a key
/// may appear only once.
pub fn parse_config_text(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut entries: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            message: "expected key = value".into(),
        })?;
        let key = key.trim();
        let value = value.trim();
        if !valid_key(key) {
            return Err(ConfigError::Syntax {
                line,
                message: format!("invalid key {key:?}"),
            });
        }
        if value.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                message: format!("empty value for {key:?}"),
            });
        }
        if entries.iter().any(|e| e.key == key) {
            return Err(ConfigError::Syntax {
                line,
                message: format!("duplicate key {key:?}"),
            });
        }
        entries.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line,
        });
    }
    Ok(entries)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    F64,
    U64,
    Usize,
    /// Comma-separated reals.
    F64List,
    /// Comma-separated reals, or `auto`.
    AutoList,
    Text,
    Choice(&'static [&'static str]),
}

#[derive(Debug, Clone, Copy)]
pub struct Param {
    pub key: &'static str,
    pub default: &'static str,
    pub kind: Kind,
    /// Repeated command-line flags append instead of replacing.
    pub repeatable: bool,
}

const fn p(key: &'static str, default: &'static str, kind: Kind) -> Param {
    Param {
        key,
        default,
        kind,
        repeatable: false,
    }
}

const fn list(key: &'static str, default: &'static str, kind: Kind) -> Param {
    Param {
        key,
        default,
        kind,
        repeatable: true,
    }
}

const COMMON: &[Param] = &[
    p("seed", "0", Kind::U64),
    p("out", ".", Kind::Text),
    p("format", "csv", Kind::Choice(&["csv", "json"])),
];

const DESIGN: &[Param] = &[
    p("design", "harmonic", Kind::Choice(&["harmonic", "equal-optimum", "custom"])),
    list("sigma", "auto", Kind::AutoList),
    list("theta", "auto", Kind::AutoList),
    p("null_mass", "0", Kind::F64),
];

const PROBE: &[Param] = &[
    p("features", "synthetic", Kind::Text),
    p("superclass", "none", Kind::Text),
    p("test_fraction", "0.2", Kind::F64),
    p("classes", "10", Kind::Usize),
    p("dim", "50", Kind::Usize),
    p("train_per_class", "500", Kind::Usize),
    p("test_per_class", "2000", Kind::Usize),
    p("separation", "2.5", Kind::F64),
    p("superclass_size", "0", Kind::Usize),
    p("corruption", "random", Kind::Choice(&["random", "hierarchical", "adversarial"])),
    p("level", "0.5", Kind::F64),
    p("k", "5", Kind::Usize),
    p("lambda", "0.03", Kind::F64),
    p("epochs", "300", Kind::Usize),
    p("step_size", "0.5", Kind::F64),
    list("lr_grid", "auto", Kind::AutoList),
    p("seeds", "1", Kind::Usize),
];

/// Parameters for each subcommand, common keys first.
pub fn schema(command: &str) -> Option<Vec<Param>> {
    let own: Vec<Param> = match command {
        "ridge-sweep" => vec![list("gamma", "0.25", Kind::F64List), list("lambdas", "auto", Kind::AutoList)],
        "logit-figure1" => vec![
            list("r", "0.2,0.3,0.4", Kind::F64List),
            p("c", "0.1", Kind::F64),
            p("n", "5000", Kind::F64),
            p("p_step", "0.005", Kind::F64),
        ],
        "gram-table" => vec![
            p("dist", "uniform", Kind::Choice(&["uniform", "bernoulli"])),
            p("q", "0.8", Kind::F64),
            p("p", "0.45", Kind::F64),
            p("lambda_hat", "0.75", Kind::F64),
            p("n", "1000", Kind::Usize),
            p("replicates", "1", Kind::Usize),
            p("solver", "newton", Kind::Choice(&["newton", "fixed-point"])),
            p("tol", "1e-9", Kind::F64),
        ],
        "probe-run" => {
            let mut v = PROBE.to_vec();
            v.push(p("xi", "1", Kind::F64));
            v
        }
        "probe-sweep" => {
            let mut v = PROBE.to_vec();
            v.push(list("xi", "0,0.5,1,1.5,2", Kind::F64List));
            v
        }
        "xi-star" => {
            let mut v = DESIGN.to_vec();
            v.extend([p("gamma", "0.25", Kind::F64), p("lambda", "0.0625", Kind::F64)]);
            v
        }
        "lambda-compare" => {
            let mut v = DESIGN.to_vec();
            v.extend([
                p("gamma", "0.25", Kind::F64),
                p("lambda_lo", "auto", Kind::Text),
                p("lambda_hi", "auto", Kind::Text),
            ]);
            v
        }
        _ => return None,
    };
    let mut all = COMMON.to_vec();
    all.extend(own);
    Some(all)
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("{t:?} is not a finite number"))
        })
        .collect()
}

fn check(kind: Kind, value: &str) -> Result<(), String> {
    match kind {
        Kind::F64 => value
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(|_| ())
            .ok_or_else(|| format!("{value:?} is not a finite number")),
        Kind::U64 => value.parse::<u64>().map(|_| ()).map_err(|e| e.to_string()),
        Kind::Usize => value.parse::<usize>().map(|_| ()).map_err(|e| e.to_string()),
        Kind::F64List => parse_list(value).map(|_| ()),
        Kind::AutoList if value == "auto" => Ok(()),
        Kind::AutoList => parse_list(value).map(|_| ()),
        Kind::Text => Ok(()),
        Kind::Choice(options) if options.contains(&value) => Ok(()),
        Kind::Choice(options) => Err(format!("expected one of {}", options.join(", "))),
    }
}

/// Fully resolved parameters of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: String,
    values: BTreeMap<String, String>,
    order: Vec<&'static str>,
}

impl RunConfig {
    /// Defaults, then the config file entries, then command-line pairs.
    pub fn resolve(command: &str, file: &[Entry], flags: &[(String, String)]) -> Result<Self, ConfigError> {
        let params = schema(command).ok_or_else(|| ConfigError::Usage(format!("unknown command {command:?}")))?;
        let mut values: BTreeMap<String, String> = params.iter().map(|p| (p.key.to_string(), p.default.to_string())).collect();
        let find = |key: &str| params.iter().find(|p| p.key == key).ok_or_else(|| ConfigError::UnknownKey(key.to_string()));
        for e in file {
            find(&e.key)?;
            values.insert(e.key.clone(), e.value.clone());
        }
        let mut appended: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for (key, value) in flags {
            let param = find(key)?;
            if param.repeatable {
                appended.entry(param.key).or_default().push(value.clone());
            } else {
                values.insert(key.clone(), value.clone());
            }
        }
        for (key, vals) in appended {
            values.insert(key.to_string(), vals.join(","));
        }
        for param in &params {
            check(param.kind, &values[param.key]).map_err(|message| ConfigError::BadValue {
                key: param.key.to_string(),
                message,
            })?;
        }
        Ok(Self {
            command: command.to_string(),
            values,
            order: params.iter().map(|p| p.key).collect(),
        })
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("key {key} not in schema"))
    }

    fn bad(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::BadValue {
            key: key.to_string(),
            message: message.into(),
        }
    }

    pub fn f64(&self, key: &str) -> f64 {
        self.get(key).parse().expect("validated")
    }

    pub fn u64(&self, key: &str) -> u64 {
        self.get(key).parse().expect("validated")
    }

    pub fn usize(&self, key: &str) -> usize {
        self.get(key).parse().expect("validated")
    }

    pub fn list(&self, key: &str) -> Vec<f64> {
        parse_list(self.get(key)).expect("validated")
    }

    /// `None` for `auto`.
    pub fn auto_list(&self, key: &str) -> Option<Vec<f64>> {
        match self.get(key) {
            "auto" => None,
            v => Some(parse_list(v).expect("validated")),
        }
    }

    /// Real value that may also be `auto`.
    pub fn auto_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(key) {
            "auto" => Ok(None),
            v => v
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(Some)
                .ok_or_else(|| self.bad(key, format!("{v:?} is neither auto nor a number"))),
        }
    }

    /// Resolved pairs in schema order.
    pub fn pairs(&self) -> Vec<(&'static str, &str)> {
        self.order.iter().map(|&k| (k, self.values[k].as_str())).collect()
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# {}", self.command)?;
        for (k, v) in self.pairs() {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Turn trailing `--key value` / `--key=value` arguments into pairs.
/// Dashes in keys map to underscores.
pub fn parse_flag_pairs(args: &[String]) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let body = arg
            .strip_prefix("--")
            .ok_or_else(|| ConfigError::Usage(format!("expected --key value, got {arg:?}")))?;
        let (key, value) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| ConfigError::Usage(format!("--{body} needs a value")))?;
                (body.to_string(), v.clone())
            }
        };
        out.push((key.replace('-', "_"), value));
    }
    Ok(out)
}

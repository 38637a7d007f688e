//! Run configuration: a TOML document with `[system]`, `[data]` and
//! `[numerics]` sections. See the README for the full key list.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use thiserror::Error;
use toml::de::{DeTable, DeValue};
use toml::Spanned;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Envelope,
    Riemann,
    BoundaryRiemann,
    Layer,
    Simulate,
    Counterexample,
    Verify,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Analyze,
        Command::Envelope,
        Command::Riemann,
        Command::BoundaryRiemann,
        Command::Layer,
        Command::Simulate,
        Command::Counterexample,
        Command::Verify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Envelope => "envelope",
            Command::Riemann => "riemann",
            Command::BoundaryRiemann => "boundary-riemann",
            Command::Layer => "layer",
            Command::Simulate => "simulate",
            Command::Counterexample => "counterexample",
            Command::Verify => "verify",
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Auto,
    Characteristic,
    NonCharacteristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnvelopeKind {
    #[default]
    Concave,
    Convex,
    MonotoneConcave,
    MonotoneConvex,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{}:{}: {message}", .line, .column)]
pub struct ConfigError {
    pub message: String,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataConfig {
    pub u: Option<Vec<f64>>,
    pub u_left: Option<Vec<f64>>,
    pub u_right: Option<Vec<f64>>,
    pub u0: Option<Vec<f64>>,
    pub datum: Option<Vec<f64>>,
    pub u_bar: Option<Vec<f64>>,
    pub states: Vec<Vec<f64>>,
    pub s: f64,
    pub values: Vec<f64>,
    pub derivatives: Option<Vec<f64>>,
    pub kind: EnvelopeKind,
    pub example: Option<String>,
    pub u10: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Numerics {
    pub eps: Vec<f64>,
    pub nu: Vec<f64>,
    pub domain_length: f64,
    pub cells: usize,
    pub t_final: f64,
    pub trace_k: f64,
    pub margin: f64,
    pub regime: Regime,
    pub x_max: f64,
    pub samples: usize,
    pub snapshots: usize,
    /// Spectral shift for the block degeneracy check; may be zero.
    pub sigma: f64,
    pub random_states: usize,
    pub lip_k: Option<f64>,
    pub nodes: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            eps: vec![0.005],
            nu: vec![1e-2, 1e-3, 1e-4],
            domain_length: 4.0,
            cells: 4000,
            t_final: 0.5,
            trace_k: 8.0,
            margin: 5.0,
            regime: Regime::Auto,
            x_max: 40.0,
            samples: 401,
            snapshots: 10,
            sigma: 0.0,
            random_states: 0,
            lip_k: None,
            nodes: 4001,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub system: SystemConfig,
    pub data: DataConfig,
    pub numerics: Numerics,
}

impl RunConfig {
    /// Check names `verify` will run, in order.
    pub fn scheduled_checks(&self) -> Vec<&'static str> {
        match self.command {
            Command::Verify => vec![
                "strict_hyperbolicity",
                "block_linear_degeneracy",
                "kawashima",
                "count_invariance",
                "stable_dimension",
                "beta_transversality",
            ],
            Command::Analyze => vec!["strict_hyperbolicity", "count_invariance", "stable_dimension", "regime"],
            _ => Vec::new(),
        }
    }
}

/// Line and column (both 1-based) of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map(|i| offset - i).unwrap_or(offset + 1);
    (line, col)
}

struct Ctx<'a> {
    text: &'a str,
    strict: bool,
    warnings: Vec<String>,
}

impl Ctx<'_> {
    fn err(&self, span: Range<usize>, message: impl Into<String>) -> ConfigError {
        let (line, column) = line_col(self.text, span.start);
        ConfigError { message: message.into(), line, column }
    }

    fn unknown(&mut self, span: Range<usize>, key: &str, section: &str) -> Result<(), ConfigError> {
        let msg = format!("unknown key `{key}` in {section}");
        if self.strict {
            return Err(self.err(span, msg));
        }
        let (l, c) = line_col(self.text, span.start);
        self.warnings.push(format!("{l}:{c}: {msg} (ignored)"));
        Ok(())
    }
}

type Item<'i> = Spanned<DeValue<'i>>;

fn number(ctx: &Ctx, key: &str, v: &Item) -> Result<f64, ConfigError> {
    let parsed = match v.get_ref() {
        DeValue::Float(f) => parse_float(f.as_str()),
        DeValue::Integer(i) => parse_int(i.as_str(), i.radix()).map(|x| x as f64),
        _ => None,
    };
    parsed.ok_or_else(|| ctx.err(v.span(), format!("`{key}` must be a number, found {}", v.get_ref().type_str())))
}

fn parse_float(s: &str) -> Option<f64> {
    let clean: String = s.chars().filter(|c| *c != '_').collect();
    match clean.as_str() {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        "nan" | "+nan" | "-nan" => Some(f64::NAN),
        other => other.parse().ok(),
    }
}

fn parse_int(s: &str, radix: u32) -> Option<i64> {
    let clean: String = s.chars().filter(|c| *c != '_').collect();
    let digits = match radix {
        10 => clean.as_str(),
        _ => clean.get(2..)?,
    };
    i64::from_str_radix(digits, radix).ok()
}

fn positive(ctx: &Ctx, key: &str, v: &Item) -> Result<f64, ConfigError> {
    let x = number(ctx, key, v)?;
    if !(x > 0.0) || !x.is_finite() {
        return Err(ctx.err(v.span(), format!("`{key}` must be positive and finite, got {x}")));
    }
    Ok(x)
}

fn count(ctx: &Ctx, key: &str, v: &Item, min: i64) -> Result<usize, ConfigError> {
    match v.get_ref() {
        DeValue::Integer(i) => match parse_int(i.as_str(), i.radix()) {
            Some(n) if n >= min => Ok(n as usize),
            _ => Err(ctx.err(v.span(), format!("`{key}` must be an integer >= {min}"))),
        },
        other => Err(ctx.err(v.span(), format!("`{key}` must be an integer, found {}", other.type_str()))),
    }
}

fn string<'a>(ctx: &Ctx, key: &str, v: &'a Item) -> Result<&'a str, ConfigError> {
    v.get_ref()
        .as_str()
        .ok_or_else(|| ctx.err(v.span(), format!("`{key}` must be a string, found {}", v.get_ref().type_str())))
}

fn vector(ctx: &Ctx, key: &str, v: &Item) -> Result<Vec<f64>, ConfigError> {
    let arr = v
        .get_ref()
        .as_array()
        .ok_or_else(|| ctx.err(v.span(), format!("`{key}` must be an array of numbers")))?;
    let out = arr.iter().map(|x| number(ctx, key, x)).collect::<Result<Vec<_>, _>>()?;
    if out.iter().any(|x| !x.is_finite()) {
        return Err(ctx.err(v.span(), format!("`{key}` contains a non-finite entry")));
    }
    Ok(out)
}

/// A number or an array of numbers, all positive.
fn positive_list(ctx: &Ctx, key: &str, v: &Item) -> Result<Vec<f64>, ConfigError> {
    let items: Vec<&Item> = match v.get_ref() {
        DeValue::Array(a) => a.iter().collect(),
        _ => vec![v],
    };
    if items.is_empty() {
        return Err(ctx.err(v.span(), format!("`{key}` must not be empty")));
    }
    items.into_iter().map(|x| positive(ctx, key, x)).collect()
}

fn table<'a, 'i>(ctx: &Ctx, key: &str, v: &'a Item<'i>) -> Result<&'a DeTable<'i>, ConfigError> {
    v.get_ref()
        .as_table()
        .ok_or_else(|| ctx.err(v.span(), format!("`{key}` must be a table")))
}

fn missing(command: Command, key: &str) -> ConfigError {
    ConfigError { message: format!("command `{command}` requires `data.{key}`"), line: 1, column: 1 }
}

/// Parses and validates a configuration. `command` overrides the document's
/// `command` key. Returns the config and the non-strict warnings.
pub fn parse_config(text: &str, command: Option<Command>, strict: bool) -> Result<(RunConfig, Vec<String>), ConfigError> {
    let doc = DeTable::parse(text).map_err(|e| {
        let (line, column) = line_col(text, e.span().map(|s| s.start).unwrap_or(0));
        ConfigError { message: e.message().trim().to_string(), line, column }
    })?;
    let mut ctx = Ctx { text, strict, warnings: Vec::new() };

    let mut doc_command = None;
    let mut system = None;
    let mut data = DataConfig { s: 1.0, u10: 1.0, gamma: 5.0, ..Default::default() };
    let mut numerics = Numerics::default();

    for (k, v) in doc.get_ref().iter() {
        match k.get_ref().as_ref() {
            "command" => {
                let name = string(&ctx, "command", v)?;
                doc_command = Some(Command::from_str(name).map_err(|m| ctx.err(v.span(), m))?);
            }
            "system" => {
                let t = table(&ctx, "system", v)?;
                system = Some(parse_system(&mut ctx, t, v.span())?)
            }
            "data" => {
                let t = table(&ctx, "data", v)?;
                parse_data(&mut ctx, t, &mut data)?
            }
            "numerics" => {
                let t = table(&ctx, "numerics", v)?;
                parse_numerics(&mut ctx, t, &mut numerics)?
            }
            other => ctx.unknown(k.span(), other, "the top level")?,
        }
    }

    let command = command.or(doc_command).ok_or(ConfigError {
        message: "no command given (positional argument or `command` key)".into(),
        line: 1,
        column: 1,
    })?;
    // envelopes and the counterexample families do not use the system
    let system = match (system, command) {
        (Some(s), _) => s,
        (None, Command::Envelope | Command::Counterexample) => SystemConfig { name: "burgers".into(), params: BTreeMap::new() },
        (None, _) => return Err(ConfigError { message: "missing `[system]` section".into(), line: 1, column: 1 }),
    };

    let need = |x: &Option<Vec<f64>>, key: &str| if x.is_none() { Err(missing(command, key)) } else { Ok(()) };
    match command {
        Command::Envelope if data.values.is_empty() => return Err(missing(command, "values")),
        Command::Riemann => {
            need(&data.u_left, "u_left")?;
            need(&data.u_right, "u_right")?;
        }
        Command::BoundaryRiemann | Command::Simulate => {
            need(&data.u0, "u0")?;
            need(&data.datum, "datum")?;
        }
        Command::Layer => {
            need(&data.u0, "u0")?;
            need(&data.u_bar, "u_bar")?;
        }
        Command::Counterexample if data.example.is_none() => return Err(missing(command, "example")),
        _ => {}
    }
    if let Some(d) = &data.derivatives {
        if d.len() != data.values.len() {
            return Err(ConfigError {
                message: "`data.derivatives` and `data.values` differ in length".into(),
                line: 1,
                column: 1,
            });
        }
    }
    Ok((RunConfig { command, system, data, numerics }, ctx.warnings))
}

fn parse_system(ctx: &mut Ctx, t: &DeTable, span: Range<usize>) -> Result<SystemConfig, ConfigError> {
    let mut name = None;
    let mut params = BTreeMap::new();
    for (k, v) in t.iter() {
        match k.get_ref().as_ref() {
            "name" => name = Some(string(ctx, "system.name", v)?.to_string()),
            "params" => {
                for (pk, pv) in table(ctx, "system.params", v)?.iter() {
                    let key = pk.get_ref().to_string();
                    params.insert(key.clone(), number(ctx, &format!("system.params.{key}"), pv)?);
                }
            }
            other => ctx.unknown(k.span(), other, "[system]")?,
        }
    }
    let name = name.ok_or_else(|| ctx.err(span, "`[system]` requires `name`"))?;
    Ok(SystemConfig { name, params })
}

fn parse_data(ctx: &mut Ctx, t: &DeTable, d: &mut DataConfig) -> Result<(), ConfigError> {
    for (k, v) in t.iter() {
        let key = k.get_ref().as_ref();
        let full = format!("data.{key}");
        match key {
            "u" => d.u = Some(vector(ctx, &full, v)?),
            "u_left" => d.u_left = Some(vector(ctx, &full, v)?),
            "u_right" => d.u_right = Some(vector(ctx, &full, v)?),
            "u0" => d.u0 = Some(vector(ctx, &full, v)?),
            "datum" => d.datum = Some(vector(ctx, &full, v)?),
            "u_bar" => d.u_bar = Some(vector(ctx, &full, v)?),
            "states" => {
                let arr = v.get_ref().as_array().ok_or_else(|| ctx.err(v.span(), "`data.states` must be an array of arrays"))?;
                d.states = arr.iter().map(|x| vector(ctx, &full, x)).collect::<Result<_, _>>()?;
            }
            "s" => d.s = positive(ctx, &full, v)?,
            "values" => d.values = vector(ctx, &full, v)?,
            "derivatives" => d.derivatives = Some(vector(ctx, &full, v)?),
            "kind" => {
                d.kind = match string(ctx, &full, v)? {
                    "concave" => EnvelopeKind::Concave,
                    "convex" => EnvelopeKind::Convex,
                    "monotone_concave" => EnvelopeKind::MonotoneConcave,
                    "monotone_convex" => EnvelopeKind::MonotoneConvex,
                    other => return Err(ctx.err(v.span(), format!("unknown envelope kind `{other}`"))),
                }
            }
            "example" => d.example = Some(string(ctx, &full, v)?.to_string()),
            "u10" => d.u10 = positive(ctx, &full, v)?,
            "gamma" => d.gamma = positive(ctx, &full, v)?,
            other => ctx.unknown(k.span(), other, "[data]")?,
        }
    }
    Ok(())
}

fn parse_numerics(ctx: &mut Ctx, t: &DeTable, n: &mut Numerics) -> Result<(), ConfigError> {
    for (k, v) in t.iter() {
        let key = k.get_ref().as_ref();
        let full = format!("numerics.{key}");
        match key {
            "eps" => n.eps = positive_list(ctx, &full, v)?,
            "nu" => n.nu = positive_list(ctx, &full, v)?,
            "domain_length" => n.domain_length = positive(ctx, &full, v)?,
            "cells" => n.cells = count(ctx, &full, v, 2)?,
            "t_final" => n.t_final = positive(ctx, &full, v)?,
            "trace_k" => n.trace_k = positive(ctx, &full, v)?,
            "margin" => n.margin = positive(ctx, &full, v)?,
            "x_max" => n.x_max = positive(ctx, &full, v)?,
            "samples" => n.samples = count(ctx, &full, v, 2)?,
            "snapshots" => n.snapshots = count(ctx, &full, v, 1)?,
            "nodes" => n.nodes = count(ctx, &full, v, 3)?,
            "random_states" => n.random_states = count(ctx, &full, v, 1)?,
            "lip_k" => n.lip_k = Some(positive(ctx, &full, v)?),
            "sigma" => {
                let s = number(ctx, &full, v)?;
                if !s.is_finite() {
                    return Err(ctx.err(v.span(), "`numerics.sigma` must be finite"));
                }
                n.sigma = s;
            }
            "regime" => {
                n.regime = match string(ctx, &full, v)? {
                    "auto" => Regime::Auto,
                    "characteristic" => Regime::Characteristic,
                    "non-characteristic" | "non_characteristic" => Regime::NonCharacteristic,
                    other => return Err(ctx.err(v.span(), format!("unknown regime `{other}`"))),
                }
            }
            other => ctx.unknown(k.span(), other, "[numerics]")?,
        }
    }
    Ok(())
}

//! Scene descriptions: channels built from indicator functions of simple
//! frequency regions, with complex coefficients and optional modulations
//! encoding time translates.
//!
//! Text format, one term per line (`#` starts a comment):
//!
//! ```text
//! channel 0 coeff 2 0 interval 1 2
//! channel 1 coeff 1 0 box 0.2 0.04 0.24 0.08
//! channel 1 coeff 1 0 ball 0.08 0.3 0.04 mod 0.5 0
//! ```

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative snapping tolerance for region membership: points within this
/// distance of a boundary are treated as lying exactly on it.
const SNAP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// Half-open interval `[a, b)` (d = 1).
    Interval { a: f64, b: f64 },
    /// Half-open axis-aligned box `[lo, hi)`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Open euclidean ball `|ξ − c| < radius`.
    Ball { center: Vec<f64>, radius: f64 },
}

impl Primitive {
    pub fn dim(&self) -> usize {
        match self {
            Primitive::Interval { .. } => 1,
            Primitive::Box { lo, .. } => lo.len(),
            Primitive::Ball { center, .. } => center.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Primitive::Interval { a, b } => a.is_finite() && b.is_finite() && a < b,
            Primitive::Box { lo, hi } => {
                lo.len() == hi.len()
                    && !lo.is_empty()
                    && lo.iter().zip(hi).all(|(l, h)| l.is_finite() && h.is_finite() && l < h)
            }
            Primitive::Ball { center, radius } => {
                !center.is_empty() && center.iter().all(|c| c.is_finite()) && *radius > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidScene(format!("malformed primitive {self}")))
        }
    }

    /// Half-open membership; balls are open.
    pub fn contains(&self, xi: &[f64]) -> bool {
        fn ge(x: f64, a: f64) -> bool {
            x - a >= -SNAP * (1.0 + a.abs())
        }
        fn lt(x: f64, b: f64) -> bool {
            x - b < -SNAP * (1.0 + b.abs())
        }
        match self {
            Primitive::Interval { a, b } => ge(xi[0], *a) && lt(xi[0], *b),
            Primitive::Box { lo, hi } => xi
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(&x, (&l, &h))| ge(x, l) && lt(x, h)),
            Primitive::Ball { center, radius } => {
                let d2: f64 = xi.iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum();
                lt(d2, radius * radius)
            }
        }
    }

    /// Axis-aligned bounding box `[lo, hi]` in frequency space.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Primitive::Interval { a, b } => (vec![*a], vec![*b]),
            Primitive::Box { lo, hi } => (lo.clone(), hi.clone()),
            Primitive::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    /// Exact Lebesgue measure of the region.
    pub fn measure(&self) -> f64 {
        match self {
            Primitive::Interval { a, b } => b - a,
            Primitive::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| h - l).product(),
            Primitive::Ball { center, radius } => {
                let d = center.len() as i32;
                let unit = match d {
                    1 => 2.0,
                    2 => std::f64::consts::PI,
                    3 => 4.0 / 3.0 * std::f64::consts::PI,
                    _ => {
                        let half = d as f64 / 2.0;
                        std::f64::consts::PI.powf(half) / gamma_half_plus_one(d)
                    }
                };
                unit * radius.powi(d)
            }
        }
    }
}

/// `Γ(d/2 + 1)` for positive integer `d`.
fn gamma_half_plus_one(d: i32) -> f64 {
    if d % 2 == 0 {
        (1..=d / 2).map(f64::from).product()
    } else {
        let mut v = std::f64::consts::PI.sqrt() / 2.0;
        let mut x = 1.5;
        while x < d as f64 / 2.0 + 1.0 - 1e-9 {
            v *= x;
            x += 1.0;
        }
        v
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Primitive::Interval { a, b } => write!(f, "interval {a} {b}"),
            Primitive::Box { lo, hi } => write!(f, "box {} {}", join(lo), join(hi)),
            Primitive::Ball { center, radius } => write!(f, "ball {} {radius}", join(center)),
        }
    }
}

/// `coefficient · χ_region(ξ) · e^{−2πi⟨h, ξ⟩}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coefficient: Complex64,
    pub primitive: Primitive,
    pub modulation: Option<Vec<f64>>,
}

impl Term {
    pub fn indicator(coefficient: f64, primitive: Primitive) -> Self {
        Self {
            coefficient: Complex64::new(coefficient, 0.0),
            primitive,
            modulation: None,
        }
    }

    pub fn modulated(mut self, h: Vec<f64>) -> Self {
        self.modulation = Some(h);
        self
    }

    pub fn eval(&self, xi: &[f64]) -> Complex64 {
        if !self.primitive.contains(xi) {
            return Complex64::new(0.0, 0.0);
        }
        match &self.modulation {
            None => self.coefficient,
            Some(h) => {
                let phase: f64 = h.iter().zip(xi).map(|(a, b)| a * b).sum();
                self.coefficient * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * phase)
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "coeff {} {} {}",
            self.coefficient.re, self.coefficient.im, self.primitive
        )?;
        if let Some(h) = &self.modulation {
            write!(f, " mod {}", join(h))?;
        }
        Ok(())
    }
}

/// A finite family of channels, each a finite sum of terms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    channels: Vec<Vec<Term>>,
}

impl Scene {
    pub fn new(channels: Vec<Vec<Term>>) -> Result<Self> {
        let scene = Self { channels };
        scene.validate()?;
        Ok(scene)
    }

    pub fn channels(&self) -> &[Vec<Term>] {
        &self.channels
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Dimension shared by all primitives (`None` for an empty scene).
    pub fn dim(&self) -> Option<usize> {
        self.terms().next().map(|t| t.primitive.dim())
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.channels.iter().flatten()
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        for t in self.terms() {
            t.primitive.validate()?;
            if Some(t.primitive.dim()) != dim {
                return Err(Error::InvalidScene(format!(
                    "primitive {} has a different dimension from the rest of the scene",
                    t.primitive
                )));
            }
            if let Some(h) = &t.modulation {
                if h.len() != t.primitive.dim() || h.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidScene(format!(
                        "modulation of {} has the wrong dimension",
                        t.primitive
                    )));
                }
            }
            if !(t.coefficient.re.is_finite() && t.coefficient.im.is_finite()) {
                return Err(Error::InvalidScene("non-finite coefficient".into()));
            }
        }
        Ok(())
    }

    /// Evaluates channel `i` at frequency `ξ`.
    pub fn eval(&self, channel: usize, xi: &[f64]) -> Complex64 {
        self.channels[channel].iter().map(|t| t.eval(xi)).sum()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut channels: Vec<Vec<Term>> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let (channel, term) = parse_term(&tokens, line_no)?;
            if channels.len() <= channel {
                channels.resize(channel + 1, Vec::new());
            }
            channels[channel].push(term);
        }
        let scene = Self { channels };
        scene.validate().map_err(|e| Error::parse(0, "scene", e.to_string()))?;
        Ok(scene)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, terms) in self.channels.iter().enumerate() {
            for t in terms {
                out.push_str(&format!("channel {i} {t}\n"));
            }
        }
        out
    }
}

fn number(tokens: &[&str], at: usize, line: usize, field: &str) -> Result<f64> {
    let tok = tokens
        .get(at)
        .ok_or_else(|| Error::parse(line, field, "missing value"))?;
    tok.parse::<f64>()
        .map_err(|_| Error::parse(line, field, format!("`{tok}` is not a number")))
}

fn parse_term(tokens: &[&str], line: usize) -> Result<(usize, Term)> {
    let expect = |at: usize, word: &str| -> Result<()> {
        match tokens.get(at) {
            Some(t) if *t == word => Ok(()),
            Some(t) => Err(Error::parse(line, word, format!("expected `{word}`, found `{t}`"))),
            None => Err(Error::parse(line, word, format!("expected `{word}`"))),
        }
    };
    expect(0, "channel")?;
    let channel: usize = tokens
        .get(1)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::parse(line, "channel", "expected a channel index"))?;
    expect(2, "coeff")?;
    let re = number(tokens, 3, line, "coeff")?;
    let im = number(tokens, 4, line, "coeff")?;
    let kind = *tokens
        .get(5)
        .ok_or_else(|| Error::parse(line, "primitive", "missing primitive"))?;
    let mod_at = tokens.iter().position(|t| *t == "mod").unwrap_or(tokens.len());
    let args = (6..mod_at)
        .map(|i| number(tokens, i, line, kind))
        .collect::<Result<Vec<f64>>>()?;
    let primitive = match kind {
        "interval" => {
            if args.len() != 2 {
                return Err(Error::parse(line, "interval", "expects 2 values"));
            }
            Primitive::Interval { a: args[0], b: args[1] }
        }
        "box" => {
            if args.is_empty() || args.len() % 2 != 0 {
                return Err(Error::parse(line, "box", "expects 2d values"));
            }
            let d = args.len() / 2;
            Primitive::Box {
                lo: args[..d].to_vec(),
                hi: args[d..].to_vec(),
            }
        }
        "ball" => {
            if args.len() < 2 {
                return Err(Error::parse(line, "ball", "expects d + 1 values"));
            }
            let (center, radius) = args.split_at(args.len() - 1);
            Primitive::Ball {
                center: center.to_vec(),
                radius: radius[0],
            }
        }
        other => {
            return Err(Error::parse(line, "primitive", format!("unknown primitive `{other}`")))
        }
    };
    primitive
        .validate()
        .map_err(|e| Error::parse(line, kind, e.to_string()))?;
    let modulation = if mod_at < tokens.len() {
        let h = (mod_at + 1..tokens.len())
            .map(|i| number(tokens, i, line, "mod"))
            .collect::<Result<Vec<f64>>>()?;
        if h.len() != primitive.dim() {
            return Err(Error::parse(line, "mod", "modulation dimension mismatch"));
        }
        Some(h)
    } else {
        None
    };
    Ok((
        channel,
        Term {
            coefficient: Complex64::new(re, im),
            primitive,
            modulation,
        },
    ))
}

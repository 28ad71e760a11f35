use std::fmt;
use std::str::FromStr;

use super::ModelError;

/// One input signal and its channel count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SignalKind {
    Rgb,
    RgbFlow,
    LidarFlow,
    Depth,
    RgbT,
    RgbT1,
    DepthT,
    DepthT1,
}

impl SignalKind {
    pub const ALL: [SignalKind; 8] = [
        SignalKind::Rgb,
        SignalKind::RgbFlow,
        SignalKind::LidarFlow,
        SignalKind::Depth,
        SignalKind::RgbT,
        SignalKind::RgbT1,
        SignalKind::DepthT,
        SignalKind::DepthT1,
    ];

    pub fn channels(self) -> usize {
        match self {
            SignalKind::Rgb | SignalKind::RgbT | SignalKind::RgbT1 => 3,
            SignalKind::RgbFlow | SignalKind::LidarFlow => 2,
            SignalKind::Depth | SignalKind::DepthT | SignalKind::DepthT1 => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SignalKind::Rgb => "rgb",
            SignalKind::RgbFlow => "rgbflow",
            SignalKind::LidarFlow => "lidarflow",
            SignalKind::Depth => "depth",
            SignalKind::RgbT => "rgb_t",
            SignalKind::RgbT1 => "rgb_t1",
            SignalKind::DepthT => "depth_t",
            SignalKind::DepthT1 => "depth_t1",
        }
    }
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SignalKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, ModelError> {
        let key = s.to_ascii_lowercase().replace(['-', '.'], "_");
        let kind = match key.as_str() {
            "rgb" => SignalKind::Rgb,
            "rgbflow" | "rgb_flow" => SignalKind::RgbFlow,
            "lidarflow" | "lidar_flow" => SignalKind::LidarFlow,
            "depth" | "lidar_depth" => SignalKind::Depth,
            "rgb_t" | "rgbt" => SignalKind::RgbT,
            "rgb_t1" | "rgbt1" | "rgb_t+1" => SignalKind::RgbT1,
            "depth_t" | "dt" => SignalKind::DepthT,
            "depth_t1" | "dt1" => SignalKind::DepthT1,
            _ => return Err(ModelError::InvalidPlan(format!("unknown signal `{s}`"))),
        };
        Ok(kind)
    }
}

/// Streams are mid-fused (`+`); signals inside a stream are early-fused
/// (`x`).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FusionPlan {
    streams: Vec<Vec<SignalKind>>,
}

impl FusionPlan {
    pub fn new(streams: Vec<Vec<SignalKind>>) -> Result<Self, ModelError> {
        if streams.is_empty() {
            return Err(ModelError::InvalidPlan("a plan needs at least one stream".into()));
        }
        for s in &streams {
            if s.is_empty() {
                return Err(ModelError::InvalidPlan("empty stream".into()));
            }
            for (i, a) in s.iter().enumerate() {
                if s[..i].contains(a) {
                    return Err(ModelError::InvalidPlan(format!("signal `{a}` repeated within a stream")));
                }
            }
        }
        Ok(FusionPlan { streams })
    }

    pub fn streams(&self) -> &[Vec<SignalKind>] {
        &self.streams
    }

    pub fn stream_channels(&self) -> Vec<usize> {
        self.streams.iter().map(|s| s.iter().map(|k| k.channels()).sum()).collect()
    }

    /// Every signal the plan reads, deduplicated, in first-use order.
    pub fn signals(&self) -> Vec<SignalKind> {
        let mut out = Vec::new();
        for &k in self.streams.iter().flatten() {
            if !out.contains(&k) {
                out.push(k);
            }
        }
        out
    }

    pub fn baseline() -> Self {
        FusionPlan { streams: vec![vec![SignalKind::Rgb]] }
    }

    pub fn two_stream() -> Self {
        FusionPlan { streams: vec![vec![SignalKind::Rgb], vec![SignalKind::RgbFlow]] }
    }

    pub fn three_stream() -> Self {
        FusionPlan {
            streams: vec![vec![SignalKind::Rgb], vec![SignalKind::RgbFlow], vec![SignalKind::LidarFlow]],
        }
    }
}

impl fmt::Display for FusionPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .streams
            .iter()
            .map(|s| {
                let names: Vec<&str> = s.iter().map(|k| k.name()).collect();
                if names.len() == 1 {
                    names[0].to_string()
                } else {
                    format!("({})", names.join(" x "))
                }
            })
            .collect();
        f.write_str(&parts.join(" + "))
    }
}

#[derive(Debug, PartialEq)]
enum Token {
    Name(String),
    Plus,
    Times,
    Open,
    Close,
}

fn tokenize(s: &str) -> Result<Vec<Token>, ModelError> {
    let mut out = Vec::new();
    let mut chars = s.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '+' => {
                chars.next();
                out.push(Token::Plus);
            }
            '×' | '*' => {
                chars.next();
                out.push(Token::Times);
            }
            '(' => {
                chars.next();
                out.push(Token::Open);
            }
            ')' => {
                chars.next();
                out.push(Token::Close);
            }
            c if c.is_ascii_alphanumeric() || c == '_' => {
                let mut word = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        word.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                if word.eq_ignore_ascii_case("x") {
                    out.push(Token::Times);
                } else {
                    out.push(Token::Name(word));
                }
            }
            other => return Err(ModelError::InvalidPlan(format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn expect_name(&mut self) -> Result<SignalKind, ModelError> {
        match self.tokens.get(self.pos) {
            Some(Token::Name(n)) => {
                self.pos += 1;
                n.parse()
            }
            other => Err(ModelError::InvalidPlan(format!("expected a signal name, found {other:?}"))),
        }
    }

    /// `sig (x sig)*`
    fn product(&mut self) -> Result<Vec<SignalKind>, ModelError> {
        let mut out = vec![self.expect_name()?];
        while self.peek() == Some(&Token::Times) {
            self.pos += 1;
            out.push(self.expect_name()?);
        }
        Ok(out)
    }

    /// `( product ) | product`
    fn stream(&mut self) -> Result<Vec<SignalKind>, ModelError> {
        if self.peek() == Some(&Token::Open) {
            self.pos += 1;
            let s = self.product()?;
            if self.peek() != Some(&Token::Close) {
                return Err(ModelError::InvalidPlan("unbalanced parenthesis".into()));
            }
            self.pos += 1;
            Ok(s)
        } else {
            self.product()
        }
    }
}

impl FromStr for FusionPlan {
    type Err = ModelError;

    /// Accepts the `+`/`x` notation, e.g. `rgb + (rgbflow x lidarflow)`,
    /// and the aliases `baseline`, `two` and `three`.
    fn from_str(s: &str) -> Result<Self, ModelError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => return Ok(FusionPlan::baseline()),
            "two" => return Ok(FusionPlan::two_stream()),
            "three" => return Ok(FusionPlan::three_stream()),
            _ => {}
        }
        let mut p = Parser { tokens: tokenize(s)?, pos: 0 };
        let mut streams = vec![p.stream()?];
        while p.peek() == Some(&Token::Plus) {
            p.pos += 1;
            streams.push(p.stream()?);
        }
        if let Some(t) = p.peek() {
            return Err(ModelError::InvalidPlan(format!("unexpected {t:?}")));
        }
        FusionPlan::new(streams)
    }
}

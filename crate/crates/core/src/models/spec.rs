use std::fmt;
use std::str::FromStr;

use super::ModelError;

/// One encoder stage: `units` ShuffleNet units, the first with stride 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StageSpec {
    pub units: usize,
    pub channels: usize,
}

/// ShuffleNet encoder layout. Exactly three stages, whose outputs sit at
/// strides 8, 16 and 32.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EncoderSpec {
    pub conv1_channels: usize,
    pub conv1_stride: usize,
    pub stages: [StageSpec; 3],
    pub groups: usize,
}

impl EncoderSpec {
    /// Desk-scale default: 8 → 16/32/64 channels, g = 2.
    pub fn tiny() -> Self {
        EncoderSpec {
            conv1_channels: 8,
            conv1_stride: 2,
            stages: [
                StageSpec { units: 3, channels: 16 },
                StageSpec { units: 3, channels: 32 },
                StageSpec { units: 2, channels: 64 },
            ],
            groups: 2,
        }
    }

    /// ShuffleNet v1, g = 3.
    pub fn full() -> Self {
        EncoderSpec {
            conv1_channels: 24,
            conv1_stride: 2,
            stages: [
                StageSpec { units: 4, channels: 240 },
                StageSpec { units: 8, channels: 480 },
                StageSpec { units: 4, channels: 960 },
            ],
            groups: 3,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidSpec(m));
        if self.groups == 0 || self.conv1_channels == 0 || self.conv1_stride == 0 {
            return bad("groups, conv1 channels and stride must be positive".into());
        }
        let mut prev = self.conv1_channels;
        for (i, s) in self.stages.iter().enumerate() {
            if s.units == 0 {
                return bad(format!("stage {} has no units", i + 2));
            }
            if s.channels % self.groups != 0 || s.channels % 4 != 0 {
                return bad(format!("stage {} channels {} must be divisible by groups and 4", i + 2, s.channels));
            }
            if (s.channels / 4) % self.groups != 0 {
                return bad(format!("stage {} bottleneck {} not divisible by groups", i + 2, s.channels / 4));
            }
            if s.channels <= prev {
                return bad(format!("stage {} must widen the {prev}-channel input", i + 2));
            }
            prev = s.channels;
        }
        Ok(())
    }

    /// Total downsampling factor of the deepest features.
    pub fn output_stride(&self) -> usize {
        self.conv1_stride * 2 * 8
    }
}

impl fmt::Display for EncoderSpec {
    /// `conv1=8/2;stages=3x16,3x32,2x64;groups=2`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let stages: Vec<String> = self.stages.iter().map(|s| format!("{}x{}", s.units, s.channels)).collect();
        write!(
            f,
            "conv1={}/{};stages={};groups={}",
            self.conv1_channels,
            self.conv1_stride,
            stages.join(","),
            self.groups
        )
    }
}

impl FromStr for EncoderSpec {
    type Err = ModelError;

    /// A profile name (`tiny`, `full`) or the [`Display`](fmt::Display) form.
    fn from_str(s: &str) -> Result<Self, ModelError> {
        match s.trim() {
            "tiny" => return Ok(EncoderSpec::tiny()),
            "full" => return Ok(EncoderSpec::full()),
            _ => {}
        }
        let bad = || ModelError::InvalidSpec(format!("cannot parse encoder spec `{s}`"));
        let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
        let mut spec = EncoderSpec::tiny();
        let mut seen = 0;
        for part in s.split(';') {
            let (k, v) = part.split_once('=').ok_or_else(bad)?;
            match k.trim() {
                "conv1" => {
                    let (c, st) = v.split_once('/').ok_or_else(bad)?;
                    spec.conv1_channels = num(c)?;
                    spec.conv1_stride = num(st)?;
                }
                "stages" => {
                    let stages: Vec<StageSpec> = v
                        .split(',')
                        .map(|st| {
                            let (u, c) = st.split_once('x').ok_or_else(bad)?;
                            Ok(StageSpec { units: num(u)?, channels: num(c)? })
                        })
                        .collect::<Result<_, ModelError>>()?;
                    spec.stages = stages.try_into().map_err(|_| bad())?;
                }
                "groups" => spec.groups = num(v)?,
                _ => return Err(bad()),
            }
            seen += 1;
        }
        if seen != 3 {
            return Err(bad());
        }
        spec.validate()?;
        Ok(spec)
    }
}

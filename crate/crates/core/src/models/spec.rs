use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Autoencoder,
    ResEncoderDecoder,
    UNet,
    SwinUNet,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Autoencoder, Family::ResEncoderDecoder, Family::UNet, Family::SwinUNet];

    /// Short name used on the command line and in table columns.
    pub fn short_name(self) -> &'static str {
        match self {
            Family::Autoencoder => "autoencoder",
            Family::ResEncoderDecoder => "resnet",
            Family::UNet => "unet",
            Family::SwinUNet => "swin",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Family::Autoencoder => "Autoencoder",
            Family::ResEncoderDecoder => "ResNet",
            Family::UNet => "UNet",
            Family::SwinUNet => "Swin-UNet",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let l = s.to_ascii_lowercase();
        Family::ALL
            .into_iter()
            .find(|f| f.short_name() == l || format!("{f:?}").to_ascii_lowercase() == l)
            .ok_or_else(|| {
                Error::invalid(format!("unknown model {s:?}; expected one of autoencoder, resnet, unet, swin"))
            })
    }
}

/// Positive rational channel multiplier.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Width {
    num: u32,
    den: u32,
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Width {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::invalid(format!("width multiplier {num}/{den} must be positive")));
        }
        let g = gcd(num, den);
        Ok(Width { num: num / g, den: den / g })
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn scale(self, factor: u32) -> Result<Self> {
        Width::new(self.num * factor, self.den)
    }

    /// `base·w`, which must be a whole number of channels.
    pub fn channels(self, base: usize) -> Result<usize> {
        let scaled = base * self.num as usize;
        if scaled % self.den as usize != 0 {
            return Err(Error::invalid(format!("width {self} gives a fractional channel count for base {base}")));
        }
        Ok(scaled / self.den as usize)
    }
}

impl fmt::Display for Width {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Width {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("width multiplier {s:?} is not a positive rational like 1/4"));
        match s.split_once('/') {
            Some((a, b)) => Width::new(a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
            None => {
                let v: f64 = s.trim().parse().map_err(|_| bad())?;
                for den in [1u32, 2, 4, 8, 16, 32, 64] {
                    let num = v * den as f64;
                    if num > 0.0 && (num - num.round()).abs() < 1e-9 {
                        return Width::new(num.round() as u32, den);
                    }
                }
                Err(bad())
            }
        }
    }
}

impl Serialize for Width {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Width {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Num(v) => v.to_string(),
            Raw::Text(t) => t,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Architecture description; unset knobs take the family's desk default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub width_multiplier: Width,
    #[serde(default)]
    pub window: Option<usize>,
    #[serde(default)]
    pub heads: Option<usize>,
    #[serde(default)]
    pub dropout: Option<f32>,
    #[serde(default)]
    pub blocks: Option<Vec<usize>>,
    /// Shifted windows in every second Swin block.
    #[serde(default = "default_true")]
    pub shift: bool,
}

fn default_true() -> bool {
    true
}

impl ModelSpec {
    pub fn desk(family: Family) -> Self {
        let quarter = Width { num: 1, den: 4 };
        let mut spec =
            ModelSpec { family, width_multiplier: quarter, window: None, heads: None, dropout: None, blocks: None, shift: true };
        match family {
            Family::Autoencoder => {}
            Family::ResEncoderDecoder => spec.blocks = Some(vec![1, 1, 1, 1]),
            Family::UNet => spec.dropout = Some(0.1),
            Family::SwinUNet => {
                spec.window = Some(4);
                spec.heads = Some(2);
            }
        }
        spec
    }

    pub fn with_width(mut self, w: Width) -> Self {
        self.width_multiplier = w;
        self
    }

    pub fn window(&self) -> usize {
        self.window.unwrap_or(4)
    }

    pub fn heads(&self) -> usize {
        self.heads.unwrap_or(2)
    }

    pub fn dropout(&self) -> f32 {
        self.dropout.unwrap_or(0.1)
    }

    pub fn blocks(&self) -> Vec<usize> {
        self.blocks.clone().unwrap_or_else(|| vec![1, 1, 1, 1])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_parsing() {
        assert_eq!("1/4".parse::<Width>().unwrap(), Width::new(1, 4).unwrap());
        assert_eq!("0.25".parse::<Width>().unwrap(), Width::new(2, 8).unwrap());
        assert_eq!("2".parse::<Width>().unwrap().channels(16).unwrap(), 32);
        assert!("0".parse::<Width>().is_err());
        assert!(Width::new(1, 3).unwrap().channels(64).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        for f in Family::ALL {
            let s = ModelSpec::desk(f);
            assert_eq!(ModelSpec::from_json(&s.to_json()).unwrap(), s);
        }
        let s = ModelSpec::from_json(r#"{"family":"UNet","width_multiplier":0.5}"#).unwrap();
        assert_eq!(s.width_multiplier, Width::new(1, 2).unwrap());
        assert!(s.shift);
    }

    #[test]
    fn family_names() {
        assert_eq!("resnet".parse::<Family>().unwrap(), Family::ResEncoderDecoder);
        assert_eq!("SwinUNet".parse::<Family>().unwrap(), Family::SwinUNet);
        let err = "vgg".parse::<Family>().unwrap_err().to_string();
        assert!(err.contains("autoencoder, resnet, unet, swin"));
    }
}

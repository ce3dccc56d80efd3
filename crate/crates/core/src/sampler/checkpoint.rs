//! Chain checkpoints: hyperparameters, factors, sweep count and RNG state.
//!
//! ```text
//! sigma=0.5
//! sigma_p=5.0
//! xi=0.5
//! d_max=8
//! radius=10.0          # or `none`
//! sweep_count=1200
//! rng=<hex token>
//! factors:
//! <factor text format>
//! ```

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;

use super::{Hyperparams, SamplerState};
use crate::error::{Error, Result};
use crate::tensor::CpFactors;
use crate::textio::{factors_from_str, factors_to_string};

/// Opaque hex encoding of a ChaCha20 stream position (seed, stream, word).
pub fn rng_token(rng: &ChaCha20Rng) -> String {
    let mut bytes = Vec::with_capacity(32 + 8 + 16);
    bytes.extend_from_slice(&rng.get_seed());
    bytes.extend_from_slice(&rng.get_stream().to_le_bytes());
    bytes.extend_from_slice(&rng.get_word_pos().to_le_bytes());
    hex::encode(bytes)
}

pub fn rng_from_token(token: &str) -> Result<ChaCha20Rng> {
    let bytes = hex::decode(token.trim()).map_err(|e| Error::Parse(format!("bad RNG token: {e}")))?;
    if bytes.len() != 56 {
        return Err(Error::Parse(format!("RNG token has {} bytes, expected 56", bytes.len())));
    }
    let seed: [u8; 32] = bytes[..32].try_into().expect("length checked");
    let stream = u64::from_le_bytes(bytes[32..40].try_into().expect("length checked"));
    let word_pos = u128::from_le_bytes(bytes[40..56].try_into().expect("length checked"));
    let mut rng = ChaCha20Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    Ok(rng)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub hp: Hyperparams,
    pub factors: CpFactors,
    pub sweep_count: u64,
    pub rng: String,
}

impl Checkpoint {
    pub fn from_state(hp: &Hyperparams, state: &SamplerState) -> Self {
        Self {
            hp: hp.clone(),
            factors: state.factors.clone(),
            sweep_count: state.sweep_count,
            rng: rng_token(&state.rng),
        }
    }

    pub fn to_state(&self) -> Result<SamplerState> {
        Ok(SamplerState {
            factors: self.factors.clone(),
            rng: rng_from_token(&self.rng)?,
            sweep_count: self.sweep_count,
        })
    }
}

impl fmt::Display for Checkpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "sigma={:?}", self.hp.sigma)?;
        writeln!(f, "sigma_p={:?}", self.hp.sigma_p)?;
        writeln!(f, "xi={:?}", self.hp.xi)?;
        writeln!(f, "d_max={}", self.hp.d_max)?;
        match self.hp.radius {
            Some(r) => writeln!(f, "radius={r:?}")?,
            None => writeln!(f, "radius=none")?,
        }
        writeln!(f, "sweep_count={}", self.sweep_count)?;
        writeln!(f, "rng={}", self.rng)?;
        writeln!(f, "factors:")?;
        f.write_str(&factors_to_string(&self.factors))
    }
}

impl FromStr for Checkpoint {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let (head, body) = text
            .split_once("factors:")
            .ok_or_else(|| Error::Parse("checkpoint has no `factors:` section".into()))?;
        let mut fields = std::collections::HashMap::new();
        for line in head.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad checkpoint line {line:?}")))?;
            fields.insert(k.trim(), v.trim());
        }
        let get = |key: &str| {
            fields
                .get(key)
                .copied()
                .ok_or_else(|| Error::Parse(format!("checkpoint is missing `{key}`")))
        };
        let num = |key: &str| -> Result<f64> {
            get(key)?
                .parse()
                .map_err(|_| Error::Parse(format!("bad value for `{key}`")))
        };
        let radius = match get("radius")? {
            "none" => None,
            _ => Some(num("radius")?),
        };
        let hp = Hyperparams {
            sigma: num("sigma")?,
            sigma_p: num("sigma_p")?,
            xi: num("xi")?,
            d_max: get("d_max")?
                .parse()
                .map_err(|_| Error::Parse("bad value for `d_max`".into()))?,
            radius,
        };
        hp.validate()?;
        let sweep_count = get("sweep_count")?
            .parse()
            .map_err(|_| Error::Parse("bad value for `sweep_count`".into()))?;
        let rng = get("rng")?.to_string();
        rng_from_token(&rng)?;
        Ok(Self {
            hp,
            factors: factors_from_str(body)?,
            sweep_count,
            rng,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, RngCore};

    #[test]
    fn token_restores_stream_position() {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        rng.set_stream(3);
        for _ in 0..37 {
            rng.next_u32();
        }
        let mut restored = rng_from_token(&rng_token(&rng)).unwrap();
        for _ in 0..10 {
            assert_eq!(rng.random::<u64>(), restored.random::<u64>());
        }
    }

    #[test]
    fn malformed_tokens() {
        assert!(rng_from_token("zz").is_err());
        assert!(rng_from_token("00ff").is_err());
    }

    #[test]
    fn missing_fields_are_reported() {
        let err = "sigma=1\nfactors:\n2 1 1 1\n1\n1\n".parse::<Checkpoint>().unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }
}

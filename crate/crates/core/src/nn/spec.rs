use serde::{Deserialize, Serialize};

use super::{NnError, Result};

/// Convnet architecture: `n_layers` blocks of conv -> batch norm -> ELU -> max-pool,
/// followed by a global-average-pooled dense head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub n_layers: usize,
    pub channels: usize,
    /// (freq, time), both odd.
    pub kernel: (usize, usize),
    /// Max-pool window per layer as (freq, time).
    pub pool_schedule: Vec<(usize, usize)>,
    /// (channels, freq, time).
    pub input_shape: (usize, usize, usize),
    pub n_outputs: usize,
    #[serde(default = "default_bn_eps")]
    pub bn_eps: f64,
    #[serde(default = "default_bn_momentum")]
    pub bn_momentum: f64,
}

fn default_bn_eps() -> f64 {
    1e-5
}

fn default_bn_momentum() -> f64 {
    0.99
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        Self::tagger5()
    }
}

impl ArchitectureSpec {
    /// The five-layer 32-channel tagging convnet over a 96 x 1360 log-mel input.
    pub fn tagger5() -> Self {
        Self {
            n_layers: 5,
            channels: 32,
            kernel: (3, 3),
            pool_schedule: vec![(2, 4), (4, 4), (4, 5), (2, 4), (4, 4)],
            input_shape: (1, 96, 1360),
            n_outputs: 50,
            bn_eps: default_bn_eps(),
            bn_momentum: default_bn_momentum(),
        }
    }

    /// Two layers, four channels, 8 x 12 input: small enough for finite differences.
    pub fn toy() -> Self {
        Self {
            n_layers: 2,
            channels: 4,
            kernel: (3, 3),
            pool_schedule: vec![(2, 2), (2, 3)],
            input_shape: (1, 8, 12),
            n_outputs: 2,
            bn_eps: default_bn_eps(),
            bn_momentum: default_bn_momentum(),
        }
    }

    /// Looks up a named preset. `paper-fig1` is an alias of `tagger5`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "tagger5" | "paper-fig1" => Ok(Self::tagger5()),
            "toy" => Ok(Self::toy()),
            other => Err(NnError::Config(format!("unknown architecture preset '{other}' (expected tagger5, paper-fig1 or toy)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(NnError::Config(msg));
        if self.n_layers == 0 || self.pool_schedule.len() != self.n_layers {
            return bad(format!("{} layers but {} pool windows", self.n_layers, self.pool_schedule.len()));
        }
        if self.kernel.0.is_multiple_of(2) || self.kernel.1.is_multiple_of(2) {
            return bad(format!("kernel {:?} must be odd in both axes", self.kernel));
        }
        if self.pool_schedule.iter().any(|&(f, t)| f == 0 || t == 0) {
            return bad("pool extents must be positive".into());
        }
        let (c, h, w) = self.input_shape;
        if self.channels == 0 || self.n_outputs == 0 || c == 0 || h == 0 || w == 0 {
            return bad("channels, outputs and input extents must be positive".into());
        }
        if !(self.bn_eps > 0.0) || !(0.0..1.0).contains(&self.bn_momentum) {
            return bad(format!("bn_eps {} / bn_momentum {}", self.bn_eps, self.bn_momentum));
        }
        Ok(())
    }

    /// Post-pool (channels, freq, time) for every layer, with pool windows
    /// clamped to the remaining extent.
    pub fn post_pool_shapes(&self) -> Vec<(usize, usize, usize)> {
        let (_, mut h, mut w) = self.input_shape;
        self.pool_schedule
            .iter()
            .map(|&(pf, pt)| {
                h = pooled_extent(h, pf);
                w = pooled_extent(w, pt);
                (self.channels, h, w)
            })
            .collect()
    }

    pub fn layer_in_channels(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_shape.0
        } else {
            self.channels
        }
    }
}

/// Output extent of a non-overlapping pool whose window is clamped to the extent.
pub fn pooled_extent(extent: usize, window: usize) -> usize {
    let win = window.min(extent).max(1);
    (extent / win).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tagger5_shape_chain() {
        let shapes = ArchitectureSpec::tagger5().post_pool_shapes();
        assert_eq!(shapes, vec![(32, 48, 340), (32, 12, 85), (32, 3, 17), (32, 1, 4), (32, 1, 1)]);
    }

    #[test]
    fn presets_validate() {
        for name in ["tagger5", "paper-fig1", "toy"] {
            ArchitectureSpec::preset(name).unwrap().validate().unwrap();
        }
        assert!(ArchitectureSpec::preset("vgg16").is_err());
    }

    #[test]
    fn even_kernel_rejected() {
        let mut s = ArchitectureSpec::toy();
        s.kernel = (2, 3);
        assert!(s.validate().is_err());
    }
}

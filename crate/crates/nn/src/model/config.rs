use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    NsExtractor,
    Unet,
    Lstm,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::NsExtractor => "ns_extractor",
            Architecture::Unet => "unet",
            Architecture::Lstm => "lstm",
        }
    }
}

/// Hyperparameters of every supported network. Fields that do not apply to
/// the selected architecture are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub architecture: Architecture,
    /// Extractor blocks `C`.
    pub blocks: usize,
    /// Embedding channels `D`.
    pub channels: usize,
    /// Per-head attention embedding `E`.
    pub att_dim: usize,
    /// Attention heads `L`.
    pub heads: usize,
    /// Unfold kernel `I` and stride `J` over frequency.
    pub unfold_kernel: usize,
    pub unfold_stride: usize,
    /// BLSTM hidden units per direction `H`; `4·D` when unset.
    pub lstm_hidden: Option<usize>,
    /// Speaker classes `N`.
    pub speakers: usize,
    /// Frequency bins `F`.
    pub bins: usize,
    pub ablate_se: bool,
    pub ablate_t_att: bool,
    pub ablate_f_att: bool,
    pub unet_filters: Vec<usize>,
    pub lstm_layers: usize,
    pub lstm_units: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::NsExtractor,
            blocks: 6,
            channels: 24,
            att_dim: 4,
            heads: 4,
            unfold_kernel: 4,
            unfold_stride: 1,
            lstm_hidden: None,
            speakers: 1,
            bins: 129,
            ablate_se: false,
            ablate_t_att: false,
            ablate_f_att: false,
            unet_filters: vec![16, 32, 64, 128, 256],
            lstm_layers: 2,
            lstm_units: 512,
        }
    }
}

impl ModelConfig {
    pub fn hidden(&self) -> usize {
        self.lstm_hidden.unwrap_or(4 * self.channels)
    }

    /// Frequency length after zero padding so that exactly `ceil(F / J)` unfold
    /// windows fit.
    pub fn padded_bins(&self) -> usize {
        let (i, j) = (self.unfold_kernel, self.unfold_stride);
        (self.bins.div_ceil(j) - 1) * j + i
    }

    /// Short variant name used in reports (`full`, `w/o SE`, ...).
    pub fn variant(&self) -> String {
        if self.architecture != Architecture::NsExtractor {
            return self.architecture.as_str().to_string();
        }
        let mut off = Vec::new();
        if self.ablate_se {
            off.push("SE");
        }
        if self.ablate_t_att {
            off.push("T-Att");
        }
        if self.ablate_f_att {
            off.push("F-Att");
        }
        if off.is_empty() {
            "full".into()
        } else {
            format!("w/o {}", off.join("+"))
        }
    }

    /// Filesystem-safe form of [`ModelConfig::variant`].
    pub fn slug(&self) -> String {
        let v = self.variant();
        match v.strip_prefix("w/o ") {
            Some(rest) => format!("no-{}", rest.to_lowercase().replace('+', "-")),
            None => v.replace('_', "-"),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.bins < 2 {
            return bad(format!("bins must be >= 2, got {}", self.bins));
        }
        match self.architecture {
            Architecture::NsExtractor => {
                for (name, v) in [
                    ("blocks", self.blocks),
                    ("channels", self.channels),
                    ("att_dim", self.att_dim),
                    ("heads", self.heads),
                    ("unfold_kernel", self.unfold_kernel),
                    ("unfold_stride", self.unfold_stride),
                    ("lstm_hidden", self.hidden()),
                    ("speakers", self.speakers),
                ] {
                    if v == 0 {
                        return bad(format!("{name} must be positive"));
                    }
                }
                if self.channels % self.heads != 0 {
                    return bad(format!("channels {} not divisible by heads {}", self.channels, self.heads));
                }
                if self.unfold_stride > self.unfold_kernel {
                    return bad("unfold_stride must not exceed unfold_kernel".into());
                }
            }
            Architecture::Unet => {
                if self.unet_filters.is_empty() || self.unet_filters.contains(&0) {
                    return bad("unet_filters must be nonempty and positive".into());
                }
            }
            Architecture::Lstm => {
                if self.lstm_layers == 0 || self.lstm_units == 0 {
                    return bad("lstm_layers and lstm_units must be positive".into());
                }
            }
        }
        Ok(())
    }
}

use crate::error::{Error, Result};
use crate::numerics::{DEFAULT_EPSILON, DEFAULT_MOMENTUM};

/// Residual 1-D convolutional extractor: a stem conv-BN-ReLU followed by
/// `blocks` residual blocks of two conv layers each. No pooling inside.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorConfig {
    /// Feature count F of each input sample.
    pub input_len: usize,
    pub channels: usize,
    pub blocks: usize,
    pub kernel_size: usize,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

impl ExtractorConfig {
    pub fn new(input_len: usize) -> Self {
        Self {
            input_len,
            channels: 64,
            blocks: 4,
            kernel_size: 3,
            bn_momentum: DEFAULT_MOMENTUM,
            bn_epsilon: DEFAULT_EPSILON,
        }
    }

    /// Total convolution layers, stem included.
    pub fn conv_layers(&self) -> usize {
        1 + 2 * self.blocks
    }

    /// Sets the block count from a total conv-layer count (must be odd).
    pub fn with_conv_layers(mut self, layers: usize) -> Result<Self> {
        self.blocks = blocks_for_conv_layers(layers)?;
        Ok(self)
    }

    pub fn padding(&self) -> usize {
        (self.kernel_size - 1) / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 || self.channels == 0 {
            return Err(Error::Config("extractor input length and channels must be positive".into()));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::Config(format!(
                "kernel size {} must be odd to preserve the feature length",
                self.kernel_size
            )));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) || self.bn_epsilon <= 0.0 {
            return Err(Error::Config("batch-norm momentum must be in (0,1] and epsilon positive".into()));
        }
        Ok(())
    }

    /// Trainable scalars: conv weights and biases plus BN scale and shift.
    pub fn trainable_parameter_count(&self) -> usize {
        let (c, k) = (self.channels, self.kernel_size);
        let stem = c * k + c + 2 * c;
        let conv = c * c * k + c + 2 * c;
        stem + 2 * self.blocks * conv
    }

    /// BN running mean and variance.
    pub fn buffer_count(&self) -> usize {
        2 * self.channels * self.conv_layers()
    }
}

pub fn blocks_for_conv_layers(layers: usize) -> Result<usize> {
    if layers == 0 || layers % 2 == 0 {
        return Err(Error::Config(format!(
            "conv layer count {layers} must be odd (one stem plus two per residual block)"
        )));
    }
    Ok((layers - 1) / 2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadConfig {
    pub hidden: usize,
    pub output: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            output: 128,
        }
    }
}

impl HeadConfig {
    pub fn trainable_parameter_count(&self, input: usize) -> usize {
        input * self.hidden + self.hidden + self.hidden * self.output + self.output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub out_dim: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { out_dim: 32 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub extractor: ExtractorConfig,
    pub head: HeadConfig,
    pub classifier: ClassifierConfig,
}

impl ModelConfig {
    pub fn new(input_len: usize) -> Self {
        Self {
            extractor: ExtractorConfig::new(input_len),
            head: HeadConfig::default(),
            classifier: ClassifierConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.extractor.validate()?;
        if self.head.hidden == 0 || self.head.output == 0 || self.classifier.out_dim == 0 {
            return Err(Error::Config("head and classifier widths must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_layer_mapping() {
        assert_eq!(ExtractorConfig::new(13).conv_layers(), 9);
        for (layers, blocks) in [(1, 0), (5, 2), (9, 4), (13, 6), (17, 8)] {
            assert_eq!(blocks_for_conv_layers(layers).unwrap(), blocks);
        }
        assert!(blocks_for_conv_layers(8).is_err());
        assert!(blocks_for_conv_layers(0).is_err());
    }

    #[test]
    fn even_kernel_rejected() {
        let mut c = ExtractorConfig::new(13);
        c.kernel_size = 4;
        assert!(c.validate().is_err());
    }
}

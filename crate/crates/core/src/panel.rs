use crate::error::{Error, Result};

/// N-channel real signal panel, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    channels: Vec<Vec<f64>>,
    labels: Vec<String>,
    dt: f64,
}

impl TimeSeriesPanel {
    pub fn new(channels: Vec<Vec<f64>>, labels: Vec<String>, dt: f64) -> Result<Self> {
        if channels.len() < 2 {
            return Err(Error::Data(format!(
                "a panel needs at least 2 channels, got {}",
                channels.len()
            )));
        }
        if labels.len() != channels.len() {
            return Err(Error::Data(format!(
                "{} labels for {} channels",
                labels.len(),
                channels.len()
            )));
        }
        let len = channels[0].len();
        if len == 0 {
            return Err(Error::Data("panel has no samples".into()));
        }
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::Data("channels have different lengths".into()));
        }
        if let Some((ch, t)) = channels.iter().enumerate().find_map(|(ch, c)| {
            c.iter().position(|v| !v.is_finite()).map(|t| (ch, t))
        }) {
            return Err(Error::Data(format!(
                "non-finite sample in channel {ch} at t={t}"
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Data(format!("sample interval must be positive, got {dt}")));
        }
        Ok(Self {
            channels,
            labels,
            dt,
        })
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub(crate) fn channel_mut(&mut self, i: usize) -> &mut Vec<f64> {
        &mut self.channels[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Panel restricted to `keep`, in the given order. Needs at least two channels.
    pub fn select(&self, keep: &[usize]) -> Result<Self> {
        if let Some(&bad) = keep.iter().find(|&&i| i >= self.channel_count()) {
            return Err(Error::InvalidNode {
                index: bad,
                node_count: self.channel_count(),
            });
        }
        Self::new(
            keep.iter().map(|&i| self.channels[i].clone()).collect(),
            keep.iter().map(|&i| self.labels[i].clone()).collect(),
            self.dt,
        )
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }
}

/// `"1".."n"`, the default node labels.
pub fn default_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| i.to_string()).collect()
}

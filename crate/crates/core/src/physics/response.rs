use ndarray::{Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sounding frequencies, strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySet {
    pub frequencies_hz: Vec<f64>,
}

impl FrequencySet {
    pub fn new(frequencies_hz: Vec<f64>) -> Result<Self> {
        if frequencies_hz.is_empty() {
            return Err(Error::Domain("empty frequency set".into()));
        }
        if frequencies_hz.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::Domain("frequencies must be positive".into()));
        }
        if frequencies_hz.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("frequencies must be strictly increasing".into()));
        }
        Ok(Self { frequencies_hz })
    }

    /// `n` log-spaced values from `lo` to `hi` inclusive.
    pub fn log_spaced(lo_hz: f64, hi_hz: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Self::new(vec![lo_hz]);
        }
        let r = (hi_hz / lo_hz).ln();
        Self::new(
            (0..n)
                .map(|i| lo_hz * (r * i as f64 / (n - 1) as f64).exp())
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.frequencies_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies_hz.is_empty()
    }
}

impl Default for FrequencySet {
    /// 13 frequencies between 1 kHz and 250 kHz.
    fn default() -> Self {
        Self::log_spaced(1e3, 2.5e5, 13).expect("valid default")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    RhoTe,
    RhoTm,
    PhiTe,
    PhiTm,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::RhoTe, Channel::RhoTm, Channel::PhiTe, Channel::PhiTm];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::RhoTe => "rho_te",
            Channel::RhoTm => "rho_tm",
            Channel::PhiTe => "phi_te",
            Channel::PhiTm => "phi_tm",
        }
    }

    pub fn is_resistivity(self) -> bool {
        matches!(self, Channel::RhoTe | Channel::RhoTm)
    }
}

/// Apparent resistivity (ohm m) and phase (degrees) for both modes over
/// frequency x station.
#[derive(Debug, Clone, PartialEq)]
pub struct RmtResponse {
    pub frequencies_hz: Vec<f64>,
    pub station_x_m: Vec<f64>,
    /// Shape (4, n_freq, n_station) in [`Channel::ALL`] order.
    pub data: Array3<f64>,
    /// `true` marks a missing entry. Same shape as `data`.
    pub mask: Option<Array3<bool>>,
}

impl RmtResponse {
    pub fn new(
        frequencies_hz: Vec<f64>,
        station_x_m: Vec<f64>,
        data: Array3<f64>,
        mask: Option<Array3<bool>>,
    ) -> Result<Self> {
        let shape = (4, frequencies_hz.len(), station_x_m.len());
        if data.dim() != shape {
            return Err(Error::Dimension(format!(
                "response data {:?}, expected {:?}",
                data.dim(),
                shape
            )));
        }
        if let Some(m) = &mask {
            if m.dim() != shape {
                return Err(Error::Dimension(format!(
                    "response mask {:?}, expected {:?}",
                    m.dim(),
                    shape
                )));
            }
        }
        Ok(Self {
            frequencies_hz,
            station_x_m,
            data,
            mask,
        })
    }

    pub fn n_freq(&self) -> usize {
        self.frequencies_hz.len()
    }

    pub fn n_station(&self) -> usize {
        self.station_x_m.len()
    }

    pub fn channel(&self, c: Channel) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(0), c.index())
    }

    pub fn channel_mask(&self, c: Channel) -> Option<ArrayView2<'_, bool>> {
        self.mask.as_ref().map(|m| m.index_axis(Axis(0), c.index()))
    }

    pub fn set_channel(&mut self, c: Channel, values: &Array2<f64>) {
        self.data.index_axis_mut(Axis(0), c.index()).assign(values);
    }

    pub fn is_masked(&self) -> bool {
        self.mask.as_ref().is_some_and(|m| m.iter().any(|&b| b))
    }

    pub fn n_masked(&self) -> usize {
        self.mask
            .as_ref()
            .map_or(0, |m| m.iter().filter(|&&b| b).count())
    }
}

//! The invariant probability measure, exact or estimated on a window.

use crate::clopen::Clopen;
use crate::error::{Error, Result};
use crate::exact::Alg;
use crate::system::System;
use crate::window::OrbitWindow;
use serde::Serialize;
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum MeasureMode {
    Exact,
    Empirical { window_len: usize, seed: u64 },
}

#[derive(Clone, Debug)]
pub struct MeasureValue {
    pub value: f64,
    /// Present in exact mode.
    pub exact: Option<Alg>,
    /// Number of window positions averaged in empirical mode.
    pub positions: Option<usize>,
}

/// The unique invariant measure of a supported system.
#[derive(Clone, Debug)]
pub struct InvariantMeasure {
    sys: Arc<System>,
    mode: MeasureMode,
    window: Option<OrbitWindow>,
}

impl InvariantMeasure {
    pub fn exact(sys: &Arc<System>) -> Self {
        InvariantMeasure { sys: sys.clone(), mode: MeasureMode::Exact, window: None }
    }

    pub fn empirical(sys: &Arc<System>, window_len: usize, seed: u64) -> Result<Self> {
        let window = OrbitWindow::generate(sys, window_len, seed)?;
        Ok(InvariantMeasure {
            sys: sys.clone(),
            mode: MeasureMode::Empirical { window_len, seed },
            window: Some(window),
        })
    }

    pub fn mode(&self) -> &MeasureMode {
        &self.mode
    }

    pub fn measure(&self, e: &Clopen) -> Result<MeasureValue> {
        if !(Arc::ptr_eq(&self.sys, e.system()) || self.sys.key() == e.system().key()) {
            return Err(Error::SystemMismatch);
        }
        match &self.window {
            None => {
                let v = e.measure()?;
                Ok(MeasureValue { value: v.to_f64(), exact: Some(v), positions: None })
            }
            Some(w) => {
                let (value, positions) = w.frequency(e)?;
                Ok(MeasureValue { value, exact: None, positions: Some(positions) })
            }
        }
    }
}

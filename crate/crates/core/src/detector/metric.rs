use std::str::FromStr;

use crate::error::{Error, Result};

use super::model::out;
use super::ModelOutput;

/// A per-cell quantity of the model output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Positiveness,
    Objectness,
    Height,
    Class(usize),
    /// Center offset; two components per cell.
    Offset,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pos" => Ok(Metric::Positiveness),
            "obj" => Ok(Metric::Objectness),
            "hei" => Ok(Metric::Height),
            "off" => Ok(Metric::Offset),
            _ => s
                .strip_prefix("cls_")
                .and_then(|i| i.parse().ok())
                .map(Metric::Class)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown metric '{s}'"))),
        }
    }
}

/// Metric values on masked cells, zero elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedMap {
    pub rows: usize,
    pub cols: usize,
    pub components: usize,
    pub data: Vec<f64>,
}

impl MaskedMap {
    pub fn nonzero_count(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

pub fn extract_metric(output: &ModelOutput, metric: Metric, mask: &[bool]) -> Result<MaskedMap> {
    if mask.len() != output.rows * output.cols {
        return Err(Error::InvalidArgument(format!(
            "mask has {} cells, output has {}",
            mask.len(),
            output.rows * output.cols
        )));
    }
    let channels: Vec<usize> = match metric {
        Metric::Positiveness => vec![out::POS],
        Metric::Objectness => vec![out::OBJ],
        Metric::Height => vec![out::HEIGHT],
        Metric::Offset => vec![out::OFF_R, out::OFF_C],
        Metric::Class(i) if i < output.classes => vec![out::CLASS0 + i],
        Metric::Class(i) => {
            return Err(Error::InvalidArgument(format!("class {i} out of range (K = {})", output.classes)))
        }
    };
    let k = channels.len();
    let mut data = vec![0.0; mask.len() * k];
    for (cell, &on) in mask.iter().enumerate() {
        if on {
            let (r, c) = (cell / output.cols, cell % output.cols);
            let src = output.cell(r, c);
            for (j, &ch) in channels.iter().enumerate() {
                data[cell * k + j] = src[ch];
            }
        }
    }
    Ok(MaskedMap { rows: output.rows, cols: output.cols, components: k, data })
}

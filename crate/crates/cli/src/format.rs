//! Round-trip safe number formatting: every float is written with 17
//! significant digits.

use mcarma_core::{CMat, RMat, C64};
use serde::Serialize;
use serde_json::value::RawValue;

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON number (or `null` for non-finite values) with 17 significant digits.
pub fn num(x: f64) -> Box<RawValue> {
    let text = if x.is_finite() { float(x) } else { "null".to_string() };
    RawValue::from_string(text).expect("formatted float is valid JSON")
}

pub fn matrix(m: &RMat) -> Vec<Vec<Box<RawValue>>> {
    m.row_iter().map(|row| row.iter().map(|&v| num(v)).collect()).collect()
}

#[derive(Serialize)]
pub struct Complex {
    pub re: Box<RawValue>,
    pub im: Box<RawValue>,
}

pub fn complex(z: C64) -> Complex {
    Complex {
        re: num(z.re),
        im: num(z.im),
    }
}

#[derive(Serialize)]
pub struct ComplexMatrix {
    pub re: Vec<Vec<Box<RawValue>>>,
    pub im: Vec<Vec<Box<RawValue>>>,
}

pub fn cmatrix(m: &CMat) -> ComplexMatrix {
    ComplexMatrix {
        re: matrix(&m.map(|z| z.re)),
        im: matrix(&m.map(|z| z.im)),
    }
}

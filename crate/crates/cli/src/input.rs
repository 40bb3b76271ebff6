//! Loading algebras and elements from files or inline specifications.

use crate::Invalid;
use anyhow::{bail, Context, Result};
use nalgebra::Complex;
use orbit_core::algebra::Family;
use orbit_core::element::ElementJson;
use orbit_core::{GVector, RealSemisimpleAlgebra};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;

/// Parses a built-in algebra name: `sl<n>`, `su<p>,<q>` or `so<p>,<q>`.
pub fn parse_builtin(arg: &str) -> Option<(Family, usize, usize)> {
    let (family, rest) = if let Some(r) = arg.strip_prefix("sl") {
        (Family::SlR, r)
    } else if let Some(r) = arg.strip_prefix("su") {
        (Family::Su, r)
    } else {
        (Family::So, arg.strip_prefix("so")?)
    };
    let nums: Vec<usize> = rest.split(',').map(|x| x.trim().parse().ok()).collect::<Option<_>>()?;
    match (family, nums.as_slice()) {
        (Family::SlR, [n]) => Some((family, *n, 0)),
        (Family::Su | Family::So, [p, q]) => Some((family, *p, *q)),
        _ => None,
    }
}

/// Loads an algebra JSON file, or builds a built-in algebra when `arg` is
/// not an existing path but a built-in name.
pub fn load_algebra(arg: &str, tol: f64) -> Result<RealSemisimpleAlgebra> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some((family, p, q)) = parse_builtin(arg) {
            return RealSemisimpleAlgebra::builtin(family, p, q).map_err(Into::into);
        }
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading algebra {arg}"))?;
    let json = serde_json::from_str(&text).map_err(|e| Invalid(format!("algebra {arg}: {e}")))?;
    RealSemisimpleAlgebra::from_json(&json, tol).with_context(|| format!("algebra {arg}"))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Scalar {
    Real(f64),
    Pair([f64; 2]),
    Text(String),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ElementFile {
    Coeffs(ElementJson),
    Named { terms: BTreeMap<String, Scalar> },
}

/// Parses `1`, `-0.5`, `i`, `-2i`, `1+2i`, `0.5-i`.
pub fn parse_complex(s: &str) -> Result<Complex<f64>> {
    let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        bail!(Invalid("empty coefficient".into()));
    }
    let imag = |t: &str| -> Result<f64> {
        let body = t.strip_suffix('i').unwrap();
        match body {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            b => b.parse().map_err(|_| Invalid(format!("bad coefficient {s}")).into()),
        }
    };
    if !s.ends_with('i') {
        return s.parse().map(|x| Complex::new(x, 0.0)).map_err(|_| Invalid(format!("bad coefficient {s}")).into());
    }
    // Split at the last sign that is not the leading one or part of an exponent.
    let bytes = s.as_bytes();
    let split = (1..bytes.len()).rev().find(|&k| {
        (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E')
    });
    match split {
        Some(k) => {
            let re: f64 = s[..k].parse().map_err(|_| Invalid(format!("bad coefficient {s}")))?;
            Ok(Complex::new(re, imag(&s[k..])?))
        }
        None => Ok(Complex::new(0.0, imag(&s)?)),
    }
}

fn from_terms(alg: &RealSemisimpleAlgebra, terms: &[(String, Complex<f64>)]) -> Result<GVector> {
    let mut v = GVector::zeros(alg.dim());
    for (name, c) in terms {
        let j = alg
            .basis_index(name)
            .ok_or_else(|| Invalid(format!("unknown basis element {name}; basis is {:?}", alg.basis_names())))?;
        v.re[j] += c.re;
        v.im[j] += c.im;
    }
    Ok(v)
}

/// Inline element: `name=coeff` terms separated by `;` or whitespace, e.g.
/// `h=0.5; e=i; f=0.25i`.
pub fn parse_inline(alg: &RealSemisimpleAlgebra, arg: &str) -> Result<GVector> {
    let mut terms = Vec::new();
    for item in arg.split([';', ' ']).filter(|x| !x.trim().is_empty()) {
        let (name, value) = item.split_once('=').ok_or_else(|| Invalid(format!("expected name=coeff, got {item}")))?;
        terms.push((name.trim().to_string(), parse_complex(value)?));
    }
    if terms.is_empty() {
        bail!(Invalid("empty element".into()));
    }
    from_terms(alg, &terms)
}

/// Loads an element from a JSON file (`{"re": [...], "im": [...]}` or
/// `{"terms": {"e": [0, 1]}}`) or parses it inline when no such file exists.
pub fn load_element(alg: &RealSemisimpleAlgebra, arg: &str) -> Result<GVector> {
    let path = Path::new(arg);
    if !path.exists() && arg.contains('=') {
        return parse_inline(alg, arg);
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading element {arg}"))?;
    let file: ElementFile = serde_json::from_str(&text).map_err(|e| Invalid(format!("element {arg}: {e}")))?;
    let v = match file {
        ElementFile::Coeffs(j) => GVector::try_from(j).map_err(|e| Invalid(format!("element {arg}: {e}")))?,
        ElementFile::Named { terms } => {
            let mut list = Vec::new();
            for (k, s) in terms {
                let c = match s {
                    Scalar::Real(x) => Complex::new(x, 0.0),
                    Scalar::Pair([a, b]) => Complex::new(a, b),
                    Scalar::Text(t) => parse_complex(&t)?,
                };
                list.push((k, c));
            }
            from_terms(alg, &list)?
        }
    };
    alg.ensure_dim(&v)?;
    Ok(v)
}

/// Parses a comma-separated list of reals.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| x.trim().parse::<f64>().map_err(|_| Invalid(format!("bad number {x}")).into()))
        .collect()
}

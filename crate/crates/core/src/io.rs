//! File formats: fiber patterns and density models as JSON, sample points,
//! K-function estimates and envelopes as CSV, and simulation configs.
//!
//! CSV numbers are written with 17 significant digits so that reading a
//! file back reproduces the values exactly.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::density::{DensityModel, DirectionalDensity, LinearTrend};
use crate::error::{Error, Result};
use crate::fiber::{CubicCurve, Fiber, FiberGeometry, SamplePoint};
use crate::geometry::{Dim, Direction, OrientationConvention, Point, Window};
use crate::kstat::KEstimate;
use crate::simulate::{
    sigma_for_mean_length, DependentModelSpec, Envelope, FiberPattern, NullModelSpec,
    DEFAULT_CORR_SCALE,
};

/// Formats a float with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConventionDoc {
    pub oriented: bool,
    pub pole: Vec<f64>,
}

impl ConventionDoc {
    pub fn from_convention(c: &OrientationConvention<f64>) -> Self {
        ConventionDoc {
            oriented: c.oriented,
            pole: c.pole.as_slice().to_vec(),
        }
    }

    pub fn to_convention(&self) -> Result<OrientationConvention<f64>> {
        let pole = Direction::new(&self.pole).map_err(|e| Error::schema("pole", e.to_string()))?;
        Ok(OrientationConvention {
            oriented: self.oriented,
            pole,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "lowercase")]
pub enum FiberPayload {
    Segment {
        midpoint: Vec<f64>,
        direction: Vec<f64>,
        length: f64,
    },
    Polyline {
        vertices: Vec<Vec<f64>>,
    },
    Cubic {
        /// One `[c0, c1, c2, c3]` row per coordinate, parameter in `[-1, 1]`.
        coefficients: Vec<[f64; 4]>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberDoc {
    pub id: u64,
    #[serde(flatten)]
    pub payload: FiberPayload,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternDoc {
    pub dim: usize,
    pub oriented: bool,
    pub pole: Vec<f64>,
    pub window: Vec<f64>,
    pub fibers: Vec<FiberDoc>,
}

impl PatternDoc {
    pub fn from_pattern(p: &FiberPattern) -> Self {
        let fibers = p
            .fibers
            .iter()
            .map(|f| FiberDoc {
                id: f.id,
                payload: match &f.geometry {
                    FiberGeometry::Segment {
                        midpoint,
                        direction,
                        length,
                    } => FiberPayload::Segment {
                        midpoint: midpoint.as_slice().to_vec(),
                        direction: direction.as_slice().to_vec(),
                        length: *length,
                    },
                    FiberGeometry::Polyline { vertices } => FiberPayload::Polyline {
                        vertices: vertices.iter().map(|v| v.as_slice().to_vec()).collect(),
                    },
                    FiberGeometry::Cubic(c) => FiberPayload::Cubic {
                        coefficients: c.coefficients().to_vec(),
                    },
                },
            })
            .collect();
        PatternDoc {
            dim: p.dim.n(),
            oriented: p.convention.oriented,
            pole: p.convention.pole.as_slice().to_vec(),
            window: p.window.extents().to_vec(),
            fibers,
        }
    }

    pub fn to_pattern(&self) -> Result<FiberPattern> {
        let dim = Dim::try_from(self.dim).map_err(|e| Error::schema("dim", e.to_string()))?;
        let check = |field: &str, v: &[f64]| -> Result<()> {
            if v.len() != dim.n() {
                return Err(Error::schema(
                    field,
                    format!("expected {} coordinates, got {}", dim.n(), v.len()),
                ));
            }
            Ok(())
        };
        check("window", &self.window)?;
        check("pole", &self.pole)?;
        let window =
            Window::new(&self.window).map_err(|e| Error::schema("window", e.to_string()))?;
        let convention = ConventionDoc {
            oriented: self.oriented,
            pole: self.pole.clone(),
        }
        .to_convention()?;
        let mut fibers = Vec::with_capacity(self.fibers.len());
        for (k, fd) in self.fibers.iter().enumerate() {
            let field = format!("fibers[{k}]");
            let wrap = |e: Error| Error::schema(field.clone(), e.to_string());
            let fiber = match &fd.payload {
                FiberPayload::Segment {
                    midpoint,
                    direction,
                    length,
                } => {
                    check(&format!("{field}.midpoint"), midpoint)?;
                    check(&format!("{field}.direction"), direction)?;
                    Fiber::segment(
                        fd.id,
                        Point::new(midpoint).map_err(wrap)?,
                        Direction::new(direction).map_err(wrap)?,
                        *length,
                    )
                    .map_err(wrap)?
                }
                FiberPayload::Polyline { vertices } => {
                    let pts = vertices
                        .iter()
                        .map(|v| {
                            check(&format!("{field}.vertices"), v)?;
                            Point::new(v).map_err(wrap)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Fiber::polyline(fd.id, pts).map_err(wrap)?
                }
                FiberPayload::Cubic { coefficients } => {
                    if coefficients.len() != dim.n() {
                        return Err(Error::schema(
                            format!("{field}.coefficients"),
                            format!("expected {} rows", dim.n()),
                        ));
                    }
                    Fiber::cubic(fd.id, CubicCurve::new(coefficients).map_err(wrap)?)
                }
            };
            fibers.push(fiber);
        }
        FiberPattern::new(convention, window, fibers)
            .map_err(|e| Error::schema("fibers", e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum EtaDoc {
    Uniform,
    Histogram2d {
        edges: Vec<f64>,
        masses: Vec<f64>,
    },
    HistogramCyl3d {
        height_edges: Vec<f64>,
        height_masses: Vec<f64>,
        angle_edges: Vec<f64>,
        angle_masses: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityDoc {
    pub beta: Vec<f64>,
    pub eta: EtaDoc,
    pub convention: ConventionDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<serde_json::Value>,
}

impl DensityDoc {
    pub fn from_model(m: &DensityModel<f64>) -> Self {
        let eta = match &m.eta {
            DirectionalDensity::Uniform => EtaDoc::Uniform,
            DirectionalDensity::Histogram2D { edges, masses } => EtaDoc::Histogram2d {
                edges: edges.clone(),
                masses: masses.clone(),
            },
            DirectionalDensity::HistogramCyl3D {
                height_edges,
                height_masses,
                angle_edges,
                angle_masses,
            } => EtaDoc::HistogramCyl3d {
                height_edges: height_edges.clone(),
                height_masses: height_masses.clone(),
                angle_edges: angle_edges.clone(),
                angle_masses: angle_masses.clone(),
            },
        };
        DensityDoc {
            beta: m.trend.beta().to_vec(),
            eta,
            convention: ConventionDoc::from_convention(&m.conv),
            diagnostics: None,
        }
    }

    pub fn to_model(&self) -> Result<DensityModel<f64>> {
        let trend = LinearTrend::new(self.beta.clone())
            .map_err(|e| Error::schema("beta", e.to_string()))?;
        let conv = self.convention.to_convention()?;
        let eta = match &self.eta {
            EtaDoc::Uniform => DirectionalDensity::Uniform,
            EtaDoc::Histogram2d { edges, masses } => DirectionalDensity::Histogram2D {
                edges: edges.clone(),
                masses: masses.clone(),
            },
            EtaDoc::HistogramCyl3d {
                height_edges,
                height_masses,
                angle_edges,
                angle_masses,
            } => DirectionalDensity::HistogramCyl3D {
                height_edges: height_edges.clone(),
                height_masses: height_masses.clone(),
                angle_edges: angle_edges.clone(),
                angle_masses: angle_masses.clone(),
            },
        };
        DensityModel::new(trend, eta, conv).map_err(|e| Error::schema("eta", e.to_string()))
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    fs::File::open(path)?.read_to_string(&mut s)?;
    Ok(s)
}

pub fn pattern_to_json(p: &FiberPattern) -> Result<String> {
    Ok(serde_json::to_string_pretty(&PatternDoc::from_pattern(p))?)
}

pub fn pattern_from_json(s: &str) -> Result<FiberPattern> {
    serde_json::from_str::<PatternDoc>(s)?.to_pattern()
}

pub fn read_pattern(path: &Path) -> Result<FiberPattern> {
    pattern_from_json(&read_to_string(path)?)
}

pub fn write_pattern(path: &Path, p: &FiberPattern) -> Result<()> {
    Ok(fs::write(path, pattern_to_json(p)? + "\n")?)
}

pub fn density_to_json(
    m: &DensityModel<f64>,
    diagnostics: Option<serde_json::Value>,
) -> Result<String> {
    let mut doc = DensityDoc::from_model(m);
    doc.diagnostics = diagnostics;
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn density_from_json(s: &str) -> Result<DensityModel<f64>> {
    serde_json::from_str::<DensityDoc>(s)?.to_model()
}

pub fn read_density(path: &Path) -> Result<DensityModel<f64>> {
    density_from_json(&read_to_string(path)?)
}

pub fn write_density(
    path: &Path,
    m: &DensityModel<f64>,
    diagnostics: Option<serde_json::Value>,
) -> Result<()> {
    Ok(fs::write(path, density_to_json(m, diagnostics)? + "\n")?)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::schema("csv", format!("{other:?}")),
    }
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn sample_header(dim: Dim) -> Vec<&'static str> {
    match dim {
        Dim::Two => vec!["fiber_id", "x", "y", "tx", "ty", "weight"],
        Dim::Three => vec!["fiber_id", "x", "y", "z", "tx", "ty", "tz", "weight"],
    }
}

/// Writes sample points as `fiber_id,x,y[,z],tx,ty[,tz],weight`.
pub fn write_samples_csv<W: Write>(out: W, dim: Dim, samples: &[SamplePoint<f64>]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(sample_header(dim)).map_err(csv_err)?;
    for s in samples {
        if s.location.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim.n(),
                found: s.location.dim().n(),
            });
        }
        let mut rec = vec![s.fiber_id.to_string()];
        rec.extend(s.location.as_slice().iter().map(|v| fmt17(*v)));
        rec.extend(s.tangent.as_slice().iter().map(|v| fmt17(*v)));
        rec.push(fmt17(s.weight));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a sample CSV; the dimension is taken from the header.
pub fn read_samples_csv<R: Read>(input: R) -> Result<(Dim, Vec<SamplePoint<f64>>)> {
    let mut r = csv::ReaderBuilder::new().from_reader(input);
    let header: Vec<String> = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    let dim = [Dim::Two, Dim::Three]
        .into_iter()
        .find(|d| sample_header(*d) == header)
        .ok_or_else(|| Error::schema("header", format!("unexpected sample header {header:?}")))?;
    let n = dim.n();
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let num = |k: usize| -> Result<f64> {
            rec[k].trim().parse::<f64>().map_err(|e| {
                Error::schema(
                    format!("row {} column {}", row + 1, header[k]),
                    e.to_string(),
                )
            })
        };
        let fiber_id = rec[0].trim().parse::<u64>().map_err(|e| {
            Error::schema(format!("row {} column fiber_id", row + 1), e.to_string())
        })?;
        let loc: Vec<f64> = (1..=n).map(num).collect::<Result<_>>()?;
        let tan: Vec<f64> = (n + 1..=2 * n).map(num).collect::<Result<_>>()?;
        let weight = num(2 * n + 1)?;
        if !(weight > 0.0) {
            return Err(Error::schema(
                format!("row {} column weight", row + 1),
                "weight must be positive",
            ));
        }
        let tangent = Direction::new(&tan)
            .map_err(|e| Error::schema(format!("row {} tangent", row + 1), e.to_string()))?;
        out.push(SamplePoint {
            location: Point::new(&loc)?,
            tangent,
            fiber_id,
            weight,
        });
    }
    Ok((dim, out))
}

/// Writes `r1,r2,k_hat,k0,k_rel`, one row per grid point, r2 varying
/// fastest. `k_rel` is `NaN` when the grid contains a zero radius.
pub fn write_k_csv<W: Write>(out: W, est: &KEstimate<f64>) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["r1", "r2", "k_hat", "k0", "k_rel"])
        .map_err(csv_err)?;
    for (i, r1) in est.grid.r1().iter().enumerate() {
        for (j, r2) in est.grid.r2().iter().enumerate() {
            let rel = est.k_rel.as_ref().map_or(f64::NAN, |m| m[i][j]);
            w.write_record([*r1, *r2, est.k_hat[i][j], est.k0[i][j], rel].map(fmt17))
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `r1,r2,lo,hi,data`.
pub fn write_envelope_csv<W: Write>(out: W, env: &Envelope) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["r1", "r2", "lo", "hi", "data"])
        .map_err(csv_err)?;
    for (i, r1) in env.grid.r1().iter().enumerate() {
        for (j, r2) in env.grid.r2().iter().enumerate() {
            w.write_record([*r1, *r2, env.lo[i][j], env.hi[i][j], env.data[i][j]].map(fmt17))
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads any of the numeric CSV outputs back as `(header, rows)`.
pub fn read_numeric_csv<R: Read>(input: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::ReaderBuilder::new().from_reader(input);
    let header: Vec<String> = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        rows.push(
            rec.iter()
                .enumerate()
                .map(|(k, v)| {
                    v.trim().parse::<f64>().map_err(|e| {
                        Error::schema(
                            format!("row {} column {}", row + 1, header[k]),
                            e.to_string(),
                        )
                    })
                })
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    Ok((header, rows))
}

/// Simulation config file. The seed is supplied separately.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase", deny_unknown_fields)]
pub enum SimConfigDoc {
    Null {
        window: Vec<f64>,
        /// Germ intensity, intercept first.
        beta: Vec<f64>,
        max_length: f64,
        #[serde(default)]
        oriented: bool,
        #[serde(default)]
        pole: Option<Vec<f64>>,
    },
    Dependent {
        window: Vec<f64>,
        beta: Vec<f64>,
        #[serde(default = "default_corr_scale")]
        corr_scale: f64,
        /// Either `sigma` or `mean_length` (default 1) fixes the field scale.
        #[serde(default)]
        sigma: Option<f64>,
        #[serde(default)]
        mean_length: Option<f64>,
        #[serde(default)]
        oriented: bool,
        #[serde(default)]
        pole: Option<Vec<f64>>,
    },
}

fn default_corr_scale() -> f64 {
    DEFAULT_CORR_SCALE
}

/// Parsed simulation request.
#[derive(Clone, Debug, PartialEq)]
pub enum SimulationSpec {
    Null(NullModelSpec),
    Dependent(DependentModelSpec),
}

fn parse_common(
    window: &[f64],
    beta: &[f64],
    oriented: bool,
    pole: &Option<Vec<f64>>,
) -> Result<(Window<f64>, LinearTrend<f64>, OrientationConvention<f64>)> {
    let w = Window::new(window).map_err(|e| Error::schema("window", e.to_string()))?;
    if beta.len() != w.dim().n() + 1 {
        return Err(Error::schema(
            "beta",
            format!(
                "expected {} coefficients for a {}-d window",
                w.dim().n() + 1,
                w.dim().n()
            ),
        ));
    }
    let trend =
        LinearTrend::new(beta.to_vec()).map_err(|e| Error::schema("beta", e.to_string()))?;
    let pole = match pole {
        Some(p) => {
            if p.len() != w.dim().n() {
                return Err(Error::schema("pole", "pole dimension differs from window"));
            }
            Direction::new(p).map_err(|e| Error::schema("pole", e.to_string()))?
        }
        None => Direction::axis(w.dim(), 1),
    };
    Ok((w, trend, OrientationConvention { oriented, pole }))
}

impl SimConfigDoc {
    pub fn to_spec(&self, seed: u64) -> Result<SimulationSpec> {
        match self {
            SimConfigDoc::Null {
                window,
                beta,
                max_length,
                oriented,
                pole,
            } => {
                let (window, trend, convention) = parse_common(window, beta, *oriented, pole)?;
                if !(*max_length > 0.0) {
                    return Err(Error::schema("max_length", "must be positive"));
                }
                Ok(SimulationSpec::Null(NullModelSpec {
                    window,
                    trend,
                    max_length: *max_length,
                    convention,
                    seed,
                }))
            }
            SimConfigDoc::Dependent {
                window,
                beta,
                corr_scale,
                sigma,
                mean_length,
                oriented,
                pole,
            } => {
                let (window, trend, convention) = parse_common(window, beta, *oriented, pole)?;
                if !(*corr_scale > 0.0) {
                    return Err(Error::schema("corr_scale", "must be positive"));
                }
                let sigma = match (sigma, mean_length) {
                    (Some(_), Some(_)) => {
                        return Err(Error::schema("sigma", "give either sigma or mean_length"))
                    }
                    (Some(s), None) => *s,
                    (None, m) => sigma_for_mean_length(window.dim(), m.unwrap_or(1.0)),
                };
                if !(sigma > 0.0) {
                    return Err(Error::schema("sigma", "must be positive"));
                }
                Ok(SimulationSpec::Dependent(DependentModelSpec {
                    window,
                    trend,
                    corr_scale: *corr_scale,
                    sigma,
                    convention,
                    seed,
                }))
            }
        }
    }
}

pub fn read_sim_config(path: &Path, seed: u64) -> Result<SimulationSpec> {
    serde_json::from_str::<SimConfigDoc>(&read_to_string(path)?)?.to_spec(seed)
}

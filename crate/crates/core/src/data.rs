//! Datasets, CSV ingestion and the synthetic generators used by the examples and tests.
//!
//! A CSV file has a header row. Coordinates live in columns `x1..xp` unless named otherwise;
//! the response, covariates and a row identifier are optional named columns. Missing cells
//! (`NA`, `NaN`, empty) are rejected with the offending row and column.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernel::PointSet;

/// Which columns of a CSV file hold what.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvSchema {
    /// Coordinate columns; empty means every `x<k>` column, `x1` first.
    pub coords: Vec<String>,
    pub response: Option<String>,
    pub covariates: Vec<String>,
    pub id: Option<String>,
}

impl CsvSchema {
    /// Schema that reads back what [`write_csv`] writes for `ds`.
    pub fn for_dataset(ds: &Dataset) -> Self {
        CsvSchema {
            coords: ds.coord_names.clone(),
            response: ds.y.as_ref().map(|_| RESPONSE_COLUMN.to_string()),
            covariates: ds.covariate_names.clone(),
            id: ds.ids.as_ref().map(|_| ID_COLUMN.to_string()),
        }
    }
}

pub const RESPONSE_COLUMN: &str = "y";
pub const ID_COLUMN: &str = "id";

/// Points with an optional response, named covariate columns and row identifiers.
/// Covariate values are stored in `pts` in the order of `covariate_names`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub pts: PointSet,
    pub coord_names: Vec<String>,
    pub y: Option<Vec<f64>>,
    pub covariate_names: Vec<String>,
    pub ids: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(pts: PointSet) -> Self {
        let coord_names = (1..=pts.dim()).map(|k| format!("x{k}")).collect();
        Dataset {
            pts,
            coord_names,
            y: None,
            covariate_names: Vec::new(),
            ids: None,
        }
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    /// Position of a covariate among the point set's covariate columns.
    pub fn covariate_column(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|c| c == name)
    }

    pub fn covariate_values(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.covariate_column(name)?;
        Some((0..self.len()).map(|i| self.pts.covariates(i)[c]).collect())
    }

    /// Identifier of row `i`: the id column when present, else the row index.
    pub fn id(&self, i: usize) -> String {
        match &self.ids {
            Some(ids) => ids[i].clone(),
            None => i.to_string(),
        }
    }

    pub fn response(&self) -> Result<&[f64]> {
        self.y
            .as_deref()
            .ok_or_else(|| Error::usage("dataset has no response column"))
    }

    /// Rows `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            pts: self.pts.select(indices),
            coord_names: self.coord_names.clone(),
            y: self.y.as_ref().map(|y| indices.iter().map(|&i| y[i]).collect()),
            covariate_names: self.covariate_names.clone(),
            ids: self
                .ids
                .as_ref()
                .map(|ids| indices.iter().map(|&i| ids[i].clone()).collect()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.coord_names.len() != self.pts.dim() {
            return Err(Error::usage("coordinate names do not match the dimension"));
        }
        if self.covariate_names.len() != self.pts.n_covariates() {
            return Err(Error::usage("covariate names do not match the covariate table"));
        }
        if self.y.as_ref().is_some_and(|y| y.len() != n) {
            return Err(Error::usage("response length differs from the number of points"));
        }
        if self.ids.as_ref().is_some_and(|ids| ids.len() != n) {
            return Err(Error::usage("id column length differs from the number of points"));
        }
        let mut all: Vec<&str> = self.coord_names.iter().map(String::as_str).collect();
        all.extend(self.covariate_names.iter().map(String::as_str));
        let mut sorted = all.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::usage(format!("duplicate column name '{}'", w[0])));
        }
        Ok(())
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.to_ascii_lowercase().as_str(),
        "" | "na" | "nan" | "null" | "none"
    )
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64> {
    let cell = cell.trim();
    let err = |message: &str| Error::Parse {
        row,
        column: column.to_string(),
        message: message.to_string(),
    };
    if is_missing(cell) {
        return Err(err("missing value"));
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| err(&format!("'{cell}' is not a number")))?;
    if !v.is_finite() {
        return Err(err("value is not finite"));
    }
    Ok(v)
}

/// `x<k>` columns ordered by `k`, which must run `1..=p`.
fn default_coords(headers: &[String]) -> Result<Vec<String>> {
    let mut found: Vec<(usize, String)> = headers
        .iter()
        .filter_map(|h| {
            h.strip_prefix('x')
                .and_then(|k| k.parse::<usize>().ok())
                .map(|k| (k, h.clone()))
        })
        .collect();
    found.sort();
    if found.is_empty() {
        return Err(Error::Parse {
            row: 1,
            column: "x1".into(),
            message: "no coordinate columns x1..xp in header".into(),
        });
    }
    for (want, (k, _)) in (1..).zip(&found) {
        if *k != want {
            return Err(Error::Parse {
                row: 1,
                column: format!("x{want}"),
                message: "coordinate columns must be x1..xp without gaps".into(),
            });
        }
    }
    Ok(found.into_iter().map(|(_, h)| h).collect())
}

/// Reads a dataset from any reader. Rows are numbered as file lines, the header being row 1.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let locate = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            row: 1,
            column: name.to_string(),
            message: "column not found in header".into(),
        })
    };
    let coord_names = if schema.coords.is_empty() {
        default_coords(&headers)?
    } else {
        schema.coords.clone()
    };
    let coord_idx = coord_names.iter().map(|c| locate(c)).collect::<Result<Vec<_>>>()?;
    let resp_idx = schema.response.as_deref().map(locate).transpose()?;
    let cov_idx = schema
        .covariates
        .iter()
        .map(|c| locate(c))
        .collect::<Result<Vec<_>>>()?;
    let id_idx = schema.id.as_deref().map(locate).transpose()?;

    let mut coords = Vec::new();
    let mut covs = Vec::new();
    let mut y = resp_idx.map(|_| Vec::new());
    let mut ids = id_idx.map(|_| Vec::new());
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { pos, expected_len, len } => Error::Parse {
                row: pos.as_ref().map_or(k + 2, |p| p.line() as usize),
                column: String::new(),
                message: format!("row has {len} fields, header has {expected_len}"),
            },
            _ => Error::Csv(e),
        })?;
        let row = rec.position().map_or(k + 2, |p| p.line() as usize);
        for (&c, name) in coord_idx.iter().zip(&coord_names) {
            coords.push(parse_cell(&rec[c], row, name)?);
        }
        for (&c, name) in cov_idx.iter().zip(&schema.covariates) {
            covs.push(parse_cell(&rec[c], row, name)?);
        }
        if let (Some(c), Some(y)) = (resp_idx, y.as_mut()) {
            y.push(parse_cell(&rec[c], row, schema.response.as_deref().unwrap_or(""))?);
        }
        if let (Some(c), Some(ids)) = (id_idx, ids.as_mut()) {
            ids.push(rec[c].to_string());
        }
    }
    if coords.is_empty() {
        return Err(Error::Parse {
            row: 2,
            column: String::new(),
            message: "no data rows".into(),
        });
    }
    let pts = PointSet::new(coord_names.len(), coords)?
        .with_covariates(schema.covariates.len(), covs)?;
    let ds = Dataset {
        pts,
        coord_names,
        y,
        covariate_names: schema.covariates.clone(),
        ids,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    read_csv(std::io::BufReader::new(file), schema)
}

/// Writes `id` (if any), the coordinates, `y` (if any) and the covariates. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    ds.validate()?;
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = Vec::new();
    if ds.ids.is_some() {
        header.push(ID_COLUMN);
    }
    header.extend(ds.coord_names.iter().map(String::as_str));
    if ds.y.is_some() {
        header.push(RESPONSE_COLUMN);
    }
    header.extend(ds.covariate_names.iter().map(String::as_str));
    w.write_record(&header)?;
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..ds.len() {
        rec.clear();
        if let Some(ids) = &ds.ids {
            rec.push(ids[i].clone());
        }
        rec.extend(ds.pts.coords(i).iter().map(f64::to_string));
        if let Some(y) = &ds.y {
            rec.push(y[i].to_string());
        }
        rec.extend(ds.pts.covariates(i).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(ds, std::io::BufWriter::new(file))
}

/// Noise sd of [`gen_toy`].
pub const TOY_NOISE_SD: f64 = 0.1;

/// Regression function of [`gen_toy`]: `2 sin(2 pi x_1)`.
pub fn toy_signal(x1: f64) -> f64 {
    2.0 * (2.0 * PI * x1).sin()
}

/// `n` points uniform on `[0, 1]^p` with `y ~ N(2 sin(2 pi x_1), 0.1^2)`.
pub fn gen_toy(n: usize, p: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || p == 0 {
        return Err(Error::usage("gen_toy needs n >= 1 and p >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let start = coords.len();
        for _ in 0..p {
            coords.push(rng.random::<f64>());
        }
        let z: f64 = rng.sample(StandardNormal);
        y.push(toy_signal(coords[start]) + TOY_NOISE_SD * z);
    }
    let mut ds = Dataset::new(PointSet::new(p, coords)?);
    ds.y = Some(y);
    Ok(ds)
}

/// A smooth coefficient surface on the unit square `(u, v)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Surface {
    /// `a + bu u + bv v`.
    Plane { a: f64, bu: f64, bv: f64 },
    /// `offset + amp sin(2 pi fu u + phase) cos(2 pi fv v)`.
    Wave {
        offset: f64,
        amp: f64,
        fu: f64,
        fv: f64,
        phase: f64,
    },
    /// `offset + amp exp(-|(u, v) - (cu, cv)|^2 / (2 width^2))`.
    Bump {
        offset: f64,
        amp: f64,
        cu: f64,
        cv: f64,
        width: f64,
    },
}

impl Surface {
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        match *self {
            Surface::Plane { a, bu, bv } => a + bu * u + bv * v,
            Surface::Wave {
                offset,
                amp,
                fu,
                fv,
                phase,
            } => offset + amp * (2.0 * PI * fu * u + phase).sin() * (2.0 * PI * fv * v).cos(),
            Surface::Bump {
                offset,
                amp,
                cu,
                cv,
                width,
            } => {
                let d2 = (u - cu).powi(2) + (v - cv).powi(2);
                offset + amp * (-d2 / (2.0 * width * width)).exp()
            }
        }
    }
}

/// Layout of a synthetic varying-coefficient dataset: `surfaces[0]` is the intercept surface,
/// `surfaces[j]` multiplies covariate `z<j>`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSpec {
    pub width: f64,
    pub height: f64,
    pub sigma: f64,
    /// Covariates are drawn `N(covariate_mean, covariate_sd^2)` independently per point.
    pub covariate_mean: f64,
    pub covariate_sd: f64,
    pub surfaces: Vec<Surface>,
}

impl Default for SpatialSpec {
    fn default() -> Self {
        SpatialSpec {
            width: 10.0,
            height: 6.0,
            sigma: 0.1,
            covariate_mean: 0.0,
            covariate_sd: 1.0,
            surfaces: vec![
                Surface::Plane {
                    a: -0.5,
                    bu: 1.0,
                    bv: 0.5,
                },
                Surface::Bump {
                    offset: 0.2,
                    amp: 0.8,
                    cu: 0.7,
                    cv: 0.3,
                    width: 0.25,
                },
                Surface::Wave {
                    offset: 0.0,
                    amp: 0.6,
                    fu: 0.75,
                    fv: 0.5,
                    phase: 0.3,
                },
            ],
        }
    }
}

/// A generated varying-coefficient dataset and its ground truth.
#[derive(Debug, Clone)]
pub struct SpatialData {
    pub dataset: Dataset,
    /// `coefficients[j][i]` is surface `j` at point `i`.
    pub coefficients: Vec<Vec<f64>>,
    /// `sum_j x_j(t_i) w_j(t_i)`.
    pub signal: Vec<f64>,
}

/// `n` locations uniform on `[0, width] x [0, height]` with
/// `y_i = w_0(t_i) + sum_j z_j(t_i) w_j(t_i) + sigma e_i`.
pub fn gen_spatial(n: usize, seed: u64, spec: &SpatialSpec) -> Result<SpatialData> {
    if n == 0 {
        return Err(Error::usage("gen_spatial needs n >= 1"));
    }
    if spec.surfaces.is_empty() {
        return Err(Error::usage("need at least the intercept surface"));
    }
    if !(spec.width > 0.0 && spec.height > 0.0) {
        return Err(Error::usage("rectangle sides must be positive"));
    }
    if !(spec.sigma >= 0.0 && spec.covariate_sd >= 0.0) {
        return Err(Error::usage("sigma and covariate sd must be nonnegative"));
    }
    let n_cov = spec.surfaces.len() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity(2 * n);
    let mut covs = Vec::with_capacity(n * n_cov);
    let mut coefficients = vec![Vec::with_capacity(n); spec.surfaces.len()];
    let mut signal = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        coords.push(u * spec.width);
        coords.push(v * spec.height);
        let mut s = 0.0;
        for (j, surf) in spec.surfaces.iter().enumerate() {
            let w = surf.eval(u, v);
            coefficients[j].push(w);
            let x = if j == 0 {
                1.0
            } else {
                let z: f64 = rng.sample(StandardNormal);
                let x = spec.covariate_mean + spec.covariate_sd * z;
                covs.push(x);
                x
            };
            s += x * w;
        }
        let e: f64 = rng.sample(StandardNormal);
        signal.push(s);
        y.push(s + spec.sigma * e);
    }
    let pts = PointSet::new(2, coords)?.with_covariates(n_cov, covs)?;
    let mut dataset = Dataset::new(pts);
    dataset.y = Some(y);
    dataset.covariate_names = (1..=n_cov).map(|j| format!("z{j}")).collect();
    Ok(SpatialData {
        dataset,
        coefficients,
        signal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_written_file_round_trips() {
        let text = "id,x1,x2,y,z1\na,0.5,1,2.25,-1\nb,0.25,3e-2,-4,7\n";
        let schema = CsvSchema {
            coords: vec![],
            response: Some("y".into()),
            covariates: vec!["z1".into()],
            id: Some("id".into()),
        };
        let ds = read_csv(text.as_bytes(), &schema).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.pts.coords(1), &[0.25, 0.03]);
        assert_eq!(ds.y.as_deref(), Some(&[2.25, -4.0][..]));
        assert_eq!(ds.covariate_values("z1").unwrap(), vec![-1.0, 7.0]);
        assert_eq!(ds.id(0), "a");
        let mut out = Vec::new();
        write_csv(&ds, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "id,x1,x2,y,z1\na,0.5,1,2.25,-1\nb,0.25,0.03,-4,7\n");
    }

    #[test]
    fn missing_cells_name_row_and_column() {
        let text = "x1,x2,y\n0,0,1\n1,NA,2\n";
        let schema = CsvSchema {
            response: Some("y".into()),
            ..Default::default()
        };
        match read_csv(text.as_bytes(), &schema) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "x2");
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = "x1,y\n0,\n";
        assert!(matches!(
            read_csv(text.as_bytes(), &schema),
            Err(Error::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn structural_errors() {
        let schema = CsvSchema::default();
        // ragged row
        match read_csv("x1,x2\n0,1\n2\n".as_bytes(), &schema) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
        // non-numeric
        match read_csv("x1\n0\nabc\n".as_bytes(), &schema) {
            Err(Error::Parse { row, column, message }) => {
                assert_eq!((row, column.as_str()), (3, "x1"));
                assert!(message.contains("abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
        // missing named column
        let s = CsvSchema {
            response: Some("resp".into()),
            ..Default::default()
        };
        assert!(matches!(
            read_csv("x1\n0\n".as_bytes(), &s),
            Err(Error::Parse { column, .. }) if column == "resp"
        ));
        // gap in x columns, no rows
        assert!(read_csv("x1,x3\n0,1\n".as_bytes(), &schema).is_err());
        assert!(read_csv("x1\n".as_bytes(), &schema).is_err());
    }

    #[test]
    fn explicit_coordinate_columns() {
        let schema = CsvSchema {
            coords: vec!["lon".into(), "lat".into()],
            ..Default::default()
        };
        let ds = read_csv("lat,lon\n1,2\n".as_bytes(), &schema).unwrap();
        assert_eq!(ds.pts.coords(0), &[2.0, 1.0]);
        assert_eq!(ds.coord_names, vec!["lon", "lat"]);
    }

    #[test]
    fn toy_is_reproducible() {
        let a = gen_toy(50, 3, 7).unwrap();
        let b = gen_toy(50, 3, 7).unwrap();
        let c = gen_toy(50, 3, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.pts.iter().all(|p| p.coords.iter().all(|x| (0.0..1.0).contains(x))));
    }

    #[test]
    fn toy_moments() {
        let n = 10_000;
        let ds = gen_toy(n, 2, 11).unwrap();
        let y = ds.y.as_ref().unwrap();
        let mean = y.iter().sum::<f64>() / n as f64;
        let sd_y = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!(mean.abs() < 3.0 * sd_y / (n as f64).sqrt());

        let resid: Vec<f64> = (0..n)
            .map(|i| y[i] - toy_signal(ds.pts.coords(i)[0]))
            .collect();
        let rm = resid.iter().sum::<f64>() / n as f64;
        let rsd = (resid.iter().map(|v| (v - rm).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((rsd / TOY_NOISE_SD - 1.0).abs() < 0.05, "{rsd}");
    }

    #[test]
    fn spatial_noise_free_signal() {
        let spec = SpatialSpec {
            sigma: 0.0,
            ..Default::default()
        };
        let d = gen_spatial(200, 3, &spec).unwrap();
        assert_eq!(d.dataset.y.as_ref().unwrap(), &d.signal);
        assert_eq!(d.dataset.covariate_names, vec!["z1", "z2"]);
        for i in 0..200 {
            let x = d.dataset.pts.covariates(i);
            let s = d.coefficients[0][i] + x[0] * d.coefficients[1][i] + x[1] * d.coefficients[2][i];
            assert!((s - d.signal[i]).abs() < 1e-12);
            let c = d.dataset.pts.coords(i);
            assert!(c[0] >= 0.0 && c[0] <= spec.width && c[1] >= 0.0 && c[1] <= spec.height);
        }
        let again = gen_spatial(200, 3, &spec).unwrap();
        assert_eq!(again.dataset, d.dataset);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut ds = gen_toy(3, 1, 0).unwrap();
        ds.pts = ds.pts.clone().with_covariates(1, vec![1.0, 2.0, 3.0]).unwrap();
        ds.covariate_names = vec!["x1".into()];
        assert!(ds.validate().is_err());
    }
}

//! On-disk formats.
//!
//! Binary files are bit-exact little-endian layouts with a four-byte magic,
//! u64 header fields, and float32 payloads:
//!
//! | magic  | contents                                                    |
//! |--------|-------------------------------------------------------------|
//! | `MSF1` | u64 N, u64 D, N u32 labels, N*D f32 features row-major      |
//! | `MSP1` | u64 kept, u64 input, f32 mean (input), f32 basis kept*input |
//! | `MSN1` | u64 N, u64 k, N*k u32 neighbor ids row-major                |
//! | `MSM1` | u64 D, D*D f32 model row-major                              |
//! | `MSE1` | u64 N_E, u64 d, u64 D, per member f32 P (d*D) then M (d*d)  |
//!
//! The CSV dataset format puts the integer label first and D decimal
//! feature fields after it; `#`-prefixed lines are comments. Report CSVs
//! (training trace, refinement trace, evaluation, precision-recall) open
//! with a `# seed=<n>` comment so the master seed rides along with the
//! numbers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write as IoWrite};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use crate::classifier::{PrCurve, Prediction};
use crate::dataset::{LabeledDataset, PcaTransform};
use crate::ensemble::RefineTrace;
use crate::error::{Error, Result};
use crate::neighborhood::NeighborhoodIndex;
use crate::similarity::{EnsembleMember, EnsembleModel, SimilarityModel};
use crate::trainer::TrainTrace;

const FEATURES_MAGIC: &[u8; 4] = b"MSF1";
const PCA_MAGIC: &[u8; 4] = b"MSP1";
const NEIGHBORS_MAGIC: &[u8; 4] = b"MSN1";
const MODEL_MAGIC: &[u8; 4] = b"MSM1";
const ENSEMBLE_MAGIC: &[u8; 4] = b"MSE1";

/// Upper bound on any single header dimension; a corrupt header must not
/// drive a huge allocation before the payload read fails.
const MAX_HEADER_DIM: u64 = 100_000_000;

fn format_error(format: &'static str, path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        format,
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn check_magic<R: Read>(
    r: &mut R,
    expected: &[u8; 4],
    format: &'static str,
    path: &Path,
) -> Result<()> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != expected {
        return Err(format_error(
            format,
            path,
            format!("bad magic {:?}", String::from_utf8_lossy(&magic)),
        ));
    }
    Ok(())
}

fn read_dim<R: Read>(r: &mut R, what: &str, format: &'static str, path: &Path) -> Result<usize> {
    let v = r.read_u64::<LittleEndian>()?;
    if v > MAX_HEADER_DIM {
        return Err(format_error(format, path, format!("implausible {what} {v}")));
    }
    Ok(v as usize)
}

fn write_f32_slice<W: IoWrite>(w: &mut W, values: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_f32::<LittleEndian>(v as f32)?;
    }
    Ok(())
}

fn read_f32_vec<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(r.read_f32::<LittleEndian>()? as f64);
    }
    Ok(out)
}

/// Writes a labeled dataset in the `MSF1` layout. Labels are stored as the
/// caller originally supplied them, so a round trip remaps identically.
pub fn write_features(path: impl AsRef<Path>, data: &LabeledDataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(FEATURES_MAGIC)?;
    w.write_u64::<LittleEndian>(data.len() as u64)?;
    w.write_u64::<LittleEndian>(data.dim() as u64)?;
    for label in data.original_labels() {
        w.write_u32::<LittleEndian>(label)?;
    }
    write_f32_slice(&mut w, data.features().iter().copied())?;
    w.flush()?;
    Ok(())
}

/// Reads an `MSF1` file; labels are remapped to contiguous ids on ingest.
pub fn read_features(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    check_magic(&mut r, FEATURES_MAGIC, "MSF1", path)?;
    let n = read_dim(&mut r, "sample count", "MSF1", path)?;
    let d = read_dim(&mut r, "dimension", "MSF1", path)?;
    if n == 0 || d == 0 {
        return Err(format_error("MSF1", path, "empty dataset"));
    }
    let mut labels = Vec::with_capacity(n);
    for row in 0..n {
        let label = r.read_u32::<LittleEndian>()?;
        if label == 0 {
            return Err(Error::InvalidLabel {
                row,
                label: "0".into(),
            });
        }
        labels.push(label);
    }
    let mut features = Array2::zeros((n, d));
    for mut row in features.rows_mut() {
        for v in row.iter_mut() {
            *v = r.read_f32::<LittleEndian>()? as f64;
        }
    }
    LabeledDataset::new(features, labels)
}

/// Writes a PCA transform in the `MSP1` layout. Explained variances are
/// not part of the format and do not survive a round trip.
pub fn write_pca(path: impl AsRef<Path>, pca: &PcaTransform) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(PCA_MAGIC)?;
    w.write_u64::<LittleEndian>(pca.target_dim() as u64)?;
    w.write_u64::<LittleEndian>(pca.input_dim() as u64)?;
    write_f32_slice(&mut w, pca.mean.iter().copied())?;
    write_f32_slice(&mut w, pca.basis.iter().copied())?;
    w.flush()?;
    Ok(())
}

/// Reads an `MSP1` file. The explained-variance list comes back zeroed.
pub fn read_pca(path: impl AsRef<Path>) -> Result<PcaTransform> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    check_magic(&mut r, PCA_MAGIC, "MSP1", path)?;
    let kept = read_dim(&mut r, "direction count", "MSP1", path)?;
    let input = read_dim(&mut r, "input dimension", "MSP1", path)?;
    if kept == 0 || input == 0 || kept > input {
        return Err(format_error(
            "MSP1",
            path,
            format!("bad shape: {kept} directions over {input} inputs"),
        ));
    }
    let mean = Array1::from(read_f32_vec(&mut r, input)?);
    let basis = Array2::from_shape_vec((kept, input), read_f32_vec(&mut r, kept * input)?)
        .expect("length checked");
    Ok(PcaTransform {
        mean,
        basis,
        explained_variance: vec![0.0; kept],
    })
}

/// Writes neighbor lists in the `MSN1` layout. Only the ids are stored;
/// the target/imposter split is rebuilt from labels at load time.
pub fn write_neighborhoods(path: impl AsRef<Path>, index: &NeighborhoodIndex) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(NEIGHBORS_MAGIC)?;
    w.write_u64::<LittleEndian>(index.len() as u64)?;
    w.write_u64::<LittleEndian>(index.k() as u64)?;
    for i in 0..index.len() {
        for &j in index.neighbors(i) {
            w.write_u32::<LittleEndian>(j)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads an `MSN1` file and re-splits each list against the given labels
/// (remapped ids from the dataset the index was built on).
pub fn read_neighborhoods(path: impl AsRef<Path>, labels: &[u32]) -> Result<NeighborhoodIndex> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    check_magic(&mut r, NEIGHBORS_MAGIC, "MSN1", path)?;
    let n = read_dim(&mut r, "sample count", "MSN1", path)?;
    let k = read_dim(&mut r, "neighborhood size", "MSN1", path)?;
    if n != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "neighborhood file vs labels",
            expected: labels.len(),
            got: n,
        });
    }
    let mut lists = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = Vec::with_capacity(k);
        for _ in 0..k {
            row.push(r.read_u32::<LittleEndian>()?);
        }
        lists.push(row);
    }
    NeighborhoodIndex::from_neighbor_lists(lists, labels)
}

/// Writes a bilinear model in the `MSM1` layout.
pub fn write_model(path: impl AsRef<Path>, model: &SimilarityModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(MODEL_MAGIC)?;
    w.write_u64::<LittleEndian>(model.dim() as u64)?;
    write_f32_slice(&mut w, model.matrix().iter().copied())?;
    w.flush()?;
    Ok(())
}

/// Reads an `MSM1` file.
pub fn read_model(path: impl AsRef<Path>) -> Result<SimilarityModel> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    check_magic(&mut r, MODEL_MAGIC, "MSM1", path)?;
    let d = read_dim(&mut r, "dimension", "MSM1", path)?;
    if d == 0 {
        return Err(format_error("MSM1", path, "zero-dimensional model"));
    }
    let matrix =
        Array2::from_shape_vec((d, d), read_f32_vec(&mut r, d * d)?).expect("length checked");
    SimilarityModel::from_matrix(matrix)
}

/// Writes an ensemble in the `MSE1` layout.
pub fn write_ensemble(path: impl AsRef<Path>, ens: &EnsembleModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(ENSEMBLE_MAGIC)?;
    w.write_u64::<LittleEndian>(ens.len() as u64)?;
    w.write_u64::<LittleEndian>(ens.subspace_dim() as u64)?;
    w.write_u64::<LittleEndian>(ens.ambient_dim() as u64)?;
    for member in ens.members() {
        write_f32_slice(&mut w, member.projection.iter().copied())?;
        write_f32_slice(&mut w, member.model.matrix().iter().copied())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an `MSE1` file.
pub fn read_ensemble(path: impl AsRef<Path>) -> Result<EnsembleModel> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    check_magic(&mut r, ENSEMBLE_MAGIC, "MSE1", path)?;
    let members = read_dim(&mut r, "member count", "MSE1", path)?;
    let d = read_dim(&mut r, "subspace dimension", "MSE1", path)?;
    let ambient = read_dim(&mut r, "ambient dimension", "MSE1", path)?;
    if members == 0 || d == 0 || ambient == 0 {
        return Err(format_error("MSE1", path, "empty ensemble"));
    }
    let mut out = Vec::with_capacity(members);
    for _ in 0..members {
        let projection = Array2::from_shape_vec((d, ambient), read_f32_vec(&mut r, d * ambient)?)
            .expect("length checked");
        let matrix =
            Array2::from_shape_vec((d, d), read_f32_vec(&mut r, d * d)?).expect("length checked");
        out.push(EnsembleMember {
            projection,
            model: SimilarityModel::from_matrix(matrix)?,
        });
    }
    EnsembleModel::from_members(out)
}

/// Writes the CSV dataset form: label first, then the feature fields.
/// When a seed is given the file opens with a `# seed=<n>` comment.
pub fn write_dataset_csv(
    path: impl AsRef<Path>,
    data: &LabeledDataset,
    seed: Option<u64>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    if let Some(seed) = seed {
        writeln!(w, "# seed={seed}")?;
    }
    let labels = data.original_labels();
    for (i, label) in labels.iter().enumerate() {
        write!(w, "{label}")?;
        for v in data.feature(i) {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the CSV dataset form. Blank lines and `#` comments are skipped;
/// every data row must carry the label plus a uniform number of fields.
pub fn read_dataset_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let mut text = String::new();
    BufReader::new(File::open(path)?).read_to_string(&mut text)?;

    let mut labels = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (line_no, line) in text.lines().enumerate() {
        let row = line_no + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let label_field = fields.next().expect("split yields at least one field");
        let label: u32 = label_field.parse().map_err(|_| Error::CsvRow {
            row,
            reason: format!("unparseable label {label_field:?}"),
        })?;
        if label == 0 {
            return Err(Error::InvalidLabel {
                row,
                label: "0".into(),
            });
        }
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::CsvRow {
                    row,
                    reason: format!("unparseable value {f:?}"),
                })
            })
            .collect::<Result<_>>()?;
        match width {
            None => {
                if values.is_empty() {
                    return Err(Error::CsvRow {
                        row,
                        reason: "row has a label but no feature values".into(),
                    });
                }
                width = Some(values.len());
            }
            Some(expected) if values.len() != expected => {
                return Err(Error::CsvRow {
                    row,
                    reason: format!("expected {expected} values, found {}", values.len()),
                });
            }
            _ => {}
        }
        labels.push(label);
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = width.expect("set with first row");
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let features = Array2::from_shape_vec((labels.len(), d), flat).expect("uniform rows");
    LabeledDataset::new(features, labels)
}

/// Writes a training trace: `epoch,objective,updates,skips,seconds` rows
/// under a `# seed=<n>` header comment.
pub fn write_trace_csv(path: impl AsRef<Path>, trace: &TrainTrace, seed: u64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    writeln!(w, "# seed={seed}")?;
    writeln!(w, "epoch,objective,updates,skips,seconds")?;
    for e in &trace.epochs {
        writeln!(
            w,
            "{},{},{},{},{}",
            e.epoch, e.objective, e.updates, e.skips, e.seconds
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every member's trace in one file, keyed by a member column.
pub fn write_member_traces_csv(
    path: impl AsRef<Path>,
    traces: &[TrainTrace],
    seed: u64,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    writeln!(w, "# seed={seed}")?;
    writeln!(w, "member,epoch,objective,updates,skips,seconds")?;
    for (n, trace) in traces.iter().enumerate() {
        for e in &trace.epochs {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                n, e.epoch, e.objective, e.updates, e.skips, e.seconds
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes a joint-refinement trace. Round 0 is the pre-refinement audit.
pub fn write_refine_csv(path: impl AsRef<Path>, trace: &RefineTrace, seed: u64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    writeln!(w, "# seed={seed}")?;
    writeln!(w, "round,objective,updates,skips,rolled_back,seconds")?;
    writeln!(w, "0,{},0,0,false,0", trace.initial_objective)?;
    for r in &trace.rounds {
        let rolled = trace.rolled_back && r.round == trace.rounds.len();
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.round, r.objective, r.updates, r.skips, rolled, r.seconds
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the per-sample evaluation report: predicted and true labels plus
/// one hit flag per requested top-n depth.
pub fn write_eval_csv(
    path: impl AsRef<Path>,
    predictions: &[Prediction],
    truth: &[u32],
    depths: &[usize],
    seed: u64,
) -> Result<()> {
    assert_eq!(
        predictions.len(),
        truth.len(),
        "eval csv: {} predictions vs {} labels",
        predictions.len(),
        truth.len()
    );
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    writeln!(w, "# seed={seed}")?;
    write!(w, "sample,predicted,truth")?;
    for n in depths {
        write!(w, ",top{n}_hit")?;
    }
    writeln!(w)?;
    for (i, (p, &y)) in predictions.iter().zip(truth.iter()).enumerate() {
        write!(w, "{},{},{}", i, p.predicted, y)?;
        for &n in depths {
            let hit = p.ranked.iter().take(n).any(|&(c, _)| c == y);
            write!(w, ",{}", u8::from(hit))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a precision-recall sweep as `cutoff,precision,recall` rows.
pub fn write_pr_csv(path: impl AsRef<Path>, curve: &PrCurve, seed: u64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    writeln!(w, "# seed={seed}")?;
    writeln!(w, "cutoff,precision,recall")?;
    for p in &curve.points {
        writeln!(w, "{},{},{}", p.cutoff, p.precision, p.recall)?;
    }
    w.flush()?;
    Ok(())
}

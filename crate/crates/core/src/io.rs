//! File formats read and written by the command-line front end.
//!
//! * feature matrix, text: first line `T F`, then `T` lines of `F` floats
//! * feature matrix, binary: magic `WTF1`, `u32` T, `u32` F, `T*F` `f32`, little-endian
//! * taxonomy: one event label per line
//! * labels: CSV `clip_id,labels` with `;`-separated event labels
//! * scores: CSV `clip_id,<event label>...`
//! * thresholds / fusion weights: JSON object keyed by event label
//! * object distributions: JSON list of `{clip_id, frames: [[{label, prob}]]}`

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::domain::{ClipBag, Dataset, EventTaxonomy, ScoreMatrix, ThresholdVector};
use crate::error::{Error, Result};
use crate::fuse::FusionWeights;
use crate::vmap::{ObjectDistribution, ObjectProb};

pub const BINARY_FEATURE_MAGIC: &[u8; 4] = b"WTF1";
pub const FEATURE_EXT: &str = "feat";

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Parse a text feature matrix.
pub fn parse_features_text<R: BufRead>(reader: R, path: &Path) -> Result<Array2<f64>> {
    let mut lines = reader.lines().enumerate();
    let (rows, cols) = loop {
        match lines.next() {
            None => return Err(Error::parse(path, 1, "missing `T F` header")),
            Some((i, line)) => {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let dims: Vec<&str> = line.split_whitespace().collect();
                let parsed = match dims.as_slice() {
                    [t, f] => t.parse::<usize>().ok().zip(f.parse::<usize>().ok()),
                    _ => None,
                };
                match parsed {
                    Some((t, f)) if t > 0 && f > 0 => break (t, f),
                    _ => {
                        return Err(Error::parse(
                            path,
                            i + 1,
                            format!("malformed header `{line}`, expected `T F` with T, F >= 1"),
                        ))
                    }
                }
            }
        }
    };
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        if seen == rows {
            return Err(Error::parse(path, lineno, format!("more than {rows} rows")));
        }
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("not a number: `{tok}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("non-finite value `{tok}`"),
                ));
            }
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::parse(
                path,
                lineno,
                format!("row has {} values, expected {cols}", data.len() - before),
            ));
        }
        seen += 1;
    }
    if seen != rows {
        return Err(Error::parse(
            path,
            seen + 2,
            format!("expected {rows} rows, found {seen}"),
        ));
    }
    Ok(Array2::from_shape_vec((rows, cols), data).expect("shape checked"))
}

fn parse_features_binary<R: Read>(mut r: R, path: &Path) -> Result<Array2<f64>> {
    let bad = |msg: String| Error::parse(path, 0, msg);
    let rows = r
        .read_u32::<LittleEndian>()
        .map_err(|e| bad(format!("header: {e}")))? as usize;
    let cols = r
        .read_u32::<LittleEndian>()
        .map_err(|e| bad(format!("header: {e}")))? as usize;
    if rows == 0 || cols == 0 {
        return Err(bad(format!("empty {rows}x{cols} matrix")));
    }
    let mut buf = vec![0f32; rows * cols];
    r.read_f32_into::<LittleEndian>(&mut buf)
        .map_err(|e| bad(format!("body: {e}")))?;
    if let Some(pos) = buf.iter().position(|v| !v.is_finite()) {
        return Err(bad(format!("non-finite value at row {}", pos / cols)));
    }
    Ok(
        Array2::from_shape_vec((rows, cols), buf.into_iter().map(f64::from).collect())
            .expect("shape checked"),
    )
}

/// Read a feature matrix, text or `WTF1` binary.
pub fn load_features(path: &Path) -> Result<Array2<f64>> {
    let mut reader = BufReader::new(open(path)?);
    let head = reader.fill_buf().map_err(|e| Error::io(path, e))?;
    if head.starts_with(BINARY_FEATURE_MAGIC) {
        reader.consume(BINARY_FEATURE_MAGIC.len());
        parse_features_binary(reader, path)
    } else {
        parse_features_text(reader, path)
    }
}

pub fn write_features_text<W: Write>(m: &Array2<f64>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{} {}", m.nrows(), m.ncols())?;
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()
}

pub fn write_features_binary<W: Write>(m: &Array2<f64>, mut out: W) -> std::io::Result<()> {
    out.write_all(BINARY_FEATURE_MAGIC)?;
    out.write_u32::<LittleEndian>(m.nrows() as u32)?;
    out.write_u32::<LittleEndian>(m.ncols() as u32)?;
    for &v in m.iter() {
        out.write_f32::<LittleEndian>(v as f32)?;
    }
    out.flush()
}

pub fn save_features(m: &Array2<f64>, path: &Path) -> Result<()> {
    write_features_text(m, create(path)?).map_err(|e| Error::io(path, e))
}

pub fn feature_path(dir: &Path, clip_id: &str) -> PathBuf {
    dir.join(format!("{clip_id}.{FEATURE_EXT}"))
}

pub fn load_taxonomy(path: &Path) -> Result<EventTaxonomy> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EventTaxonomy::new(text.lines().map(str::trim).filter(|l| !l.is_empty()))
}

pub fn save_taxonomy(tax: &EventTaxonomy, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    for l in tax.labels() {
        writeln!(out, "{l}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Clip id -> positive event ids, in file order.
pub type LabelTable = Vec<(String, BTreeSet<usize>)>;

pub fn load_labels(path: &Path, tax: &EventTaxonomy) -> Result<LabelTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(open(path)?);
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.len() != 2 || &headers[0] != "clip_id" {
        return Err(Error::parse(path, 1, "expected header `clip_id,labels`"));
    }
    let mut table = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let lineno = i + 2;
        let id = rec.get(0).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(Error::parse(path, lineno, "empty clip id"));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::parse(
                path,
                lineno,
                format!("duplicate clip id `{id}`"),
            ));
        }
        let mut pos = BTreeSet::new();
        for label in rec
            .get(1)
            .unwrap_or("")
            .split(';')
            .map(str::trim)
            .filter(|l| !l.is_empty())
        {
            let k = tax
                .id_of(label)
                .ok_or_else(|| Error::parse(path, lineno, format!("unknown event `{label}`")))?;
            pos.insert(k);
        }
        table.push((id, pos));
    }
    Ok(table)
}

pub fn save_labels(table: &LabelTable, tax: &EventTaxonomy, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    w.write_record(["clip_id", "labels"]).map_err(csv_err)?;
    for (id, pos) in table {
        let labels: Vec<&str> = pos.iter().map(|&k| tax.label(k)).collect();
        w.write_record([id.as_str(), &labels.join(";")])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Build a dataset from `<dir>/<clip_id>.feat` files for the given clips.
pub fn load_dataset(
    features_dir: &Path,
    tax: &EventTaxonomy,
    labels: &HashMap<String, BTreeSet<usize>>,
    clip_ids: &[String],
) -> Result<Dataset> {
    let clips = clip_ids
        .iter()
        .map(|id| {
            let feats = load_features(&feature_path(features_dir, id))?;
            let pos = labels
                .get(id)
                .ok_or_else(|| Error::InvalidValue(format!("no labels for clip `{id}`")))?;
            ClipBag::new(id.clone(), feats, pos.iter().copied())
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(tax.clone(), clips)
}

pub fn write_scores<W: Write>(
    scores: &ScoreMatrix,
    tax: &EventTaxonomy,
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["clip_id".to_string()];
    header.extend(tax.labels().iter().cloned());
    w.write_record(&header)?;
    for (id, row) in scores.clip_ids().iter().zip(scores.values().rows()) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_scores(scores: &ScoreMatrix, tax: &EventTaxonomy, path: &Path) -> Result<()> {
    write_scores(scores, tax, create(path)?).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_scores(path: &Path, tax: &EventTaxonomy) -> Result<ScoreMatrix> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let headers = reader.headers().map_err(csv_err)?.clone();
    let expected: Vec<&str> = std::iter::once("clip_id")
        .chain(tax.labels().iter().map(String::as_str))
        .collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::parse(
            path,
            1,
            "score header does not match the taxonomy",
        ));
    }
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        ids.push(rec[0].to_string());
        for field in rec.iter().skip(1) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(path, i + 2, format!("not a number: `{field}`")))?;
            data.push(v);
        }
    }
    let values =
        Array2::from_shape_vec((ids.len(), tax.len()), data).expect("csv rows have fixed width");
    ScoreMatrix::new(ids, values)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    writeln!(out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_reader(BufReader::new(open(path)?)).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    write_json(value, path)
}

/// Per-event values as a JSON object keyed by event label, in taxonomy order.
pub fn event_map(
    values: &[f64],
    tax: &EventTaxonomy,
) -> serde_json::Map<String, serde_json::Value> {
    tax.labels()
        .iter()
        .zip(values)
        .map(|(l, &v)| (l.clone(), serde_json::json!(v)))
        .collect()
}

fn read_event_map(path: &Path, tax: &EventTaxonomy) -> Result<Vec<f64>> {
    let map: HashMap<String, f64> = read_json(path)?;
    if map.len() != tax.len() {
        return Err(Error::InvalidValue(format!(
            "{}: {} entries for {} events",
            path.display(),
            map.len(),
            tax.len()
        )));
    }
    tax.labels()
        .iter()
        .map(|l| {
            map.get(l).copied().ok_or_else(|| {
                Error::InvalidValue(format!("{}: missing event `{l}`", path.display()))
            })
        })
        .collect()
}

pub fn save_thresholds(th: &ThresholdVector, tax: &EventTaxonomy, path: &Path) -> Result<()> {
    write_json(&event_map(th.as_slice(), tax), path)
}

pub fn load_thresholds(path: &Path, tax: &EventTaxonomy) -> Result<ThresholdVector> {
    ThresholdVector::new(read_event_map(path, tax)?)
}

pub fn save_weights(w: &FusionWeights, tax: &EventTaxonomy, path: &Path) -> Result<()> {
    write_json(&event_map(w.as_slice(), tax), path)
}

pub fn load_weights(path: &Path, tax: &EventTaxonomy) -> Result<FusionWeights> {
    FusionWeights::new(read_event_map(path, tax)?)
}

/// One clip's per-frame object distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipObjects {
    pub clip_id: String,
    pub frames: Vec<Vec<ObjectProb>>,
}

impl ClipObjects {
    pub fn distributions(&self) -> Result<Vec<ObjectDistribution>> {
        self.frames
            .iter()
            .enumerate()
            .map(|(f, entries)| {
                ObjectDistribution::new(entries.clone()).map_err(|e| {
                    Error::InvalidValue(format!("clip `{}` frame {f}: {e}", self.clip_id))
                })
            })
            .collect()
    }
}

pub fn load_objects(path: &Path) -> Result<Vec<ClipObjects>> {
    let clips: Vec<ClipObjects> = read_json(path)?;
    for c in &clips {
        c.distributions()?;
    }
    Ok(clips)
}

pub fn save_objects(clips: &[ClipObjects], path: &Path) -> Result<()> {
    write_json(&clips, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipKeyframes {
    pub clip_id: String,
    pub keyframes: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<Array2<f64>> {
        parse_features_text(text.as_bytes(), Path::new("t.feat"))
    }

    #[test]
    fn text_feature_examples() {
        let m = parse("2 3\n1 2 3\n4 5 6\n").unwrap();
        assert_eq!(m, array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert_eq!(parse("1 1\n0.5\n").unwrap(), array![[0.5]]);
    }

    #[test]
    fn text_feature_errors_carry_line_numbers() {
        let err = |t: &str| match parse(t) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        };
        assert_eq!(err("2 x\n"), 1);
        assert_eq!(err("2 2\n1 2\n3\n"), 3);
        assert_eq!(err("1 2\nnan 1\n"), 2);
        assert_eq!(err("1 1\n1\n2\n"), 3);
        assert_eq!(err("3 1\n1\n"), 3);
        assert_eq!(err(""), 1);
    }

    #[test]
    fn binary_features_roundtrip_through_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.feat");
        let m = array![[0.5, -1.25], [3.0, 1e-3]];
        write_features_binary(&m, File::create(&path).unwrap()).unwrap();
        let back = load_features(&path).unwrap();
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(*a as f32, *b as f32);
        }
    }

    #[test]
    fn labels_and_scores_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let tax = EventTaxonomy::new(["car", "car passing by", "siren, police"]).unwrap();
        let table: LabelTable = vec![
            ("a".into(), [0, 2].into_iter().collect()),
            ("b".into(), BTreeSet::new()),
        ];
        let lp = dir.path().join("labels.csv");
        save_labels(&table, &tax, &lp).unwrap();
        assert_eq!(load_labels(&lp, &tax).unwrap(), table);

        let scores = ScoreMatrix::new(
            vec!["a".into(), "b".into()],
            array![[0.1, 0.2, 1.0 / 3.0], [0.0, 1.0, 0.5]],
        )
        .unwrap();
        let sp = dir.path().join("s.csv");
        save_scores(&scores, &tax, &sp).unwrap();
        assert_eq!(load_scores(&sp, &tax).unwrap(), scores);

        let th = ThresholdVector::new(vec![0.25, 0.5, 0.75]).unwrap();
        let tp = dir.path().join("th.json");
        save_thresholds(&th, &tax, &tp).unwrap();
        assert_eq!(load_thresholds(&tp, &tax).unwrap(), th);
    }

    #[test]
    fn unknown_label_is_reported_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let tax = EventTaxonomy::new(["car"]).unwrap();
        let lp = dir.path().join("labels.csv");
        std::fs::write(&lp, "clip_id,labels\na,car\nb,bus\n").unwrap();
        assert!(matches!(
            load_labels(&lp, &tax),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    proptest! {
        #[test]
        fn text_features_roundtrip_bit_exact(
            rows in 1usize..5,
            cols in 1usize..5,
            seed in prop::collection::vec(-1e6f64..1e6, 25),
        ) {
            let m = Array2::from_shape_fn((rows, cols), |(i, j)| seed[i * 5 + j] / 7.0);
            let mut buf = Vec::new();
            write_features_text(&m, &mut buf).unwrap();
            let back = parse_features_text(buf.as_slice(), Path::new("p")).unwrap();
            prop_assert_eq!(
                m.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                back.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}

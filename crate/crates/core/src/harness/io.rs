//! Vote and label-count files.
//!
//! Votes: header `worker_id,sample_id,class`, one row per non-abstaining
//! vote. Counts: header `worker_id,class_0,...,class_{C-1}`, one row per
//! worker. Workers keep the order of their first appearance.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use super::HarnessError;
use crate::analysis::BeliefModel;
use crate::mechanism::{label_count, LabelCount, Vote, VoteMatrix};

/// Optional dimensions for parsing; missing ones are inferred from the
/// largest index seen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VoteDims {
    pub n_classes: Option<usize>,
    pub m_samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestedVotes {
    pub worker_ids: Vec<String>,
    pub matrix: VoteMatrix,
    /// Recomputed from the votes.
    pub label_counts: Vec<LabelCount>,
    pub n_classes: usize,
}

fn line_of(record: &csv::StringRecord) -> Option<u64> {
    record.position().map(csv::Position::line)
}

fn csv_error(source_name: &str, e: csv::Error) -> HarnessError {
    let line = e.position().map(csv::Position::line);
    HarnessError::parse(source_name, line, e.to_string())
}

pub fn parse_votes<R: Read>(reader: R, source_name: &str, dims: VoteDims) -> Result<IngestedVotes, HarnessError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_error(source_name, e))?.clone();
    if header.iter().collect::<Vec<_>>() != ["worker_id", "sample_id", "class"] {
        return Err(HarnessError::parse(source_name, Some(1), "expected header worker_id,sample_id,class"));
    }

    let mut worker_ids: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut entries: Vec<(usize, usize, u16)> = Vec::new();
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(source_name, e))?;
        let line = line_of(&record);
        let bad = |msg: String| HarnessError::parse(source_name, line, msg);
        let worker = record.get(0).filter(|w| !w.is_empty()).ok_or_else(|| bad("empty worker_id".into()))?;
        let sample: usize = record[1].parse().map_err(|_| bad(format!("bad sample_id `{}`", &record[1])))?;
        let class: u16 = record[2].parse().map_err(|_| bad(format!("bad class `{}`", &record[2])))?;
        if let Some(c) = dims.n_classes {
            if class as usize >= c {
                return Err(bad(format!("class {class} out of range for {c} classes")));
            }
        }
        if let Some(m) = dims.m_samples {
            if sample >= m {
                return Err(bad(format!("sample_id {sample} out of range for {m} samples")));
            }
        }
        if class == crate::ledger::ABSTAIN_CODE {
            return Err(bad("class 65535 is reserved".into()));
        }
        let w = *index.entry(worker.to_owned()).or_insert_with(|| {
            worker_ids.push(worker.to_owned());
            worker_ids.len() - 1
        });
        if !seen.insert((w, sample)) {
            return Err(bad(format!("duplicate vote for worker {worker}, sample {sample}")));
        }
        entries.push((w, sample, class));
    }

    let m = dims.m_samples.unwrap_or_else(|| entries.iter().map(|e| e.1 + 1).max().unwrap_or(0));
    let n_classes = dims.n_classes.unwrap_or_else(|| entries.iter().map(|e| e.2 as usize + 1).max().unwrap_or(1));
    let mut matrix = VoteMatrix::new(worker_ids.len(), m);
    for (w, j, c) in entries {
        matrix.set(w, j, Vote::of(c));
    }
    let label_counts = matrix.rows().map(|row| label_count(row, n_classes)).collect::<Result<Vec<_>, _>>()?;
    Ok(IngestedVotes { worker_ids, matrix, label_counts, n_classes })
}

pub fn ingest_votes(path: &Path, dims: VoteDims) -> Result<IngestedVotes, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    parse_votes(file, &path.display().to_string(), dims)
}

/// Reads declared label counts, one row per worker, reordered to match
/// `worker_ids`. Every listed worker must appear exactly once.
pub fn parse_counts<R: Read>(
    reader: R,
    source_name: &str,
    worker_ids: &[String],
) -> Result<Vec<LabelCount>, HarnessError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_error(source_name, e))?.clone();
    let n_classes = header.len().saturating_sub(1);
    let well_formed = header.get(0) == Some("worker_id")
        && n_classes > 0
        && header.iter().skip(1).enumerate().all(|(c, h)| h == format!("class_{c}"));
    if !well_formed {
        return Err(HarnessError::parse(source_name, Some(1), "expected header worker_id,class_0,class_1,..."));
    }
    let mut by_worker: HashMap<String, LabelCount> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(source_name, e))?;
        let line = line_of(&record);
        let counts = record
            .iter()
            .skip(1)
            .map(|v| v.parse::<u64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| HarnessError::parse(source_name, line, format!("bad count: {e}")))?;
        if by_worker.insert(record[0].to_owned(), LabelCount(counts)).is_some() {
            return Err(HarnessError::parse(source_name, line, format!("duplicate worker {}", &record[0])));
        }
    }
    worker_ids
        .iter()
        .map(|w| {
            by_worker
                .remove(w)
                .ok_or_else(|| HarnessError::parse(source_name, None, format!("no counts for worker {w}")))
        })
        .collect()
}

pub fn ingest_counts(path: &Path, worker_ids: &[String]) -> Result<Vec<LabelCount>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    parse_counts(file, &path.display().to_string(), worker_ids)
}

/// Workers whose declared counts differ from the recount of their votes.
pub fn verify_counts(votes: &IngestedVotes, declared: &[LabelCount]) -> Vec<String> {
    votes
        .worker_ids
        .iter()
        .zip(votes.label_counts.iter().zip(declared))
        .filter(|(_, (recount, given))| recount != given)
        .map(|(w, _)| w.clone())
        .collect()
}

pub fn export_votes<W: Write>(writer: W, worker_ids: &[String], matrix: &VoteMatrix) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["worker_id", "sample_id", "class"])?;
    for (w, row) in worker_ids.iter().zip(matrix.rows()) {
        for (j, vote) in row.iter().enumerate() {
            if let Vote::Label(c) = vote {
                wtr.write_record([w.as_str(), &j.to_string(), &c.0.to_string()])?;
            }
        }
    }
    wtr.flush()
}

pub fn export_counts<W: Write>(writer: W, worker_ids: &[String], counts: &[LabelCount]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let n_classes = counts.first().map_or(0, LabelCount::n_classes);
    let mut header = vec!["worker_id".to_owned()];
    header.extend((0..n_classes).map(|c| format!("class_{c}")));
    wtr.write_record(&header)?;
    for (w, count) in worker_ids.iter().zip(counts) {
        let mut row = vec![w.clone()];
        row.extend(count.as_slice().iter().map(u64::to_string));
        wtr.write_record(&row)?;
    }
    wtr.flush()
}

/// Reads a belief model (`joint` rows and `marginal`) from TOML, or from
/// JSON when the file name ends in `.json`.
pub fn parse_belief(text: &str, source_name: &str) -> Result<BeliefModel, HarnessError> {
    let belief: BeliefModel = if source_name.ends_with(".json") {
        serde_json::from_str(text)
            .map_err(|e| HarnessError::parse(source_name, Some(e.line() as u64), e.to_string()))?
    } else {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].lines().count().max(1) as u64);
            HarnessError::parse(source_name, line, e.message().to_owned())
        })?
    };
    belief.validate()?;
    Ok(belief)
}

pub fn ingest_belief(path: &Path) -> Result<BeliefModel, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_belief(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE: &str = "worker_id,sample_id,class\na,0,1\na,1,0\nb,0,1\nc,1,2\nc,0,0\n";

    #[test]
    fn well_formed_file() {
        let v = parse_votes(THREE.as_bytes(), "t", VoteDims::default()).unwrap();
        assert_eq!(v.worker_ids, ["a", "b", "c"]);
        assert_eq!((v.matrix.n_workers(), v.matrix.m_samples(), v.n_classes), (3, 2, 3));
        assert_eq!(v.matrix.row(1), &[Vote::of(1), Vote::Abstain]);
        assert_eq!(v.label_counts[2], LabelCount(vec![1, 0, 1]));
    }

    #[test]
    fn out_of_range_class_names_the_line() {
        let text = "worker_id,sample_id,class\na,0,1\nb,0,12\n";
        let err = parse_votes(text.as_bytes(), "v.csv", VoteDims { n_classes: Some(10), m_samples: None }).unwrap_err();
        assert!(matches!(err, HarnessError::Parse { line: Some(3), .. }), "{err}");
        assert!(err.to_string().contains("line 3"));
    }

    #[test]
    fn duplicates_and_garbage_rejected() {
        let dup = "worker_id,sample_id,class\na,0,1\na,0,2\n";
        assert!(matches!(
            parse_votes(dup.as_bytes(), "t", VoteDims::default()),
            Err(HarnessError::Parse { line: Some(3), .. })
        ));
        let garbage = "worker_id,sample_id,class\na,x,1\n";
        assert!(parse_votes(garbage.as_bytes(), "t", VoteDims::default()).is_err());
        let short = "worker_id,sample_id,class\na,1\n";
        assert!(parse_votes(short.as_bytes(), "t", VoteDims::default()).is_err());
        let header = "worker,sample,class\n";
        assert!(parse_votes(header.as_bytes(), "t", VoteDims::default()).is_err());
    }

    #[test]
    fn export_then_ingest_is_identity() {
        let v = parse_votes(THREE.as_bytes(), "t", VoteDims::default()).unwrap();
        let mut buf = Vec::new();
        export_votes(&mut buf, &v.worker_ids, &v.matrix).unwrap();
        let dims = VoteDims { n_classes: Some(3), m_samples: Some(2) };
        assert_eq!(parse_votes(buf.as_slice(), "t", dims).unwrap(), v);
    }

    #[test]
    fn counts_round_trip_and_verification() {
        let v = parse_votes(THREE.as_bytes(), "t", VoteDims::default()).unwrap();
        let mut buf = Vec::new();
        export_counts(&mut buf, &v.worker_ids, &v.label_counts).unwrap();
        let counts = parse_counts(buf.as_slice(), "t", &v.worker_ids).unwrap();
        assert_eq!(counts, v.label_counts);
        assert!(verify_counts(&v, &counts).is_empty());

        let lies = "worker_id,class_0,class_1,class_2\nc,1,0,1\nb,0,1,0\na,1,0,1\n";
        let counts = parse_counts(lies.as_bytes(), "t", &v.worker_ids).unwrap();
        assert_eq!(verify_counts(&v, &counts), ["a"]);
        assert!(parse_counts("worker_id,class_0\nz,1\n".as_bytes(), "t", &v.worker_ids).is_err());
    }

    #[test]
    fn belief_files_in_both_formats() {
        let toml = "joint = [[0.8, 0.2], [0.2, 0.8]]\nmarginal = [0.9, 0.1]\n";
        let json = r#"{"joint": [[0.8, 0.2], [0.2, 0.8]], "marginal": [0.9, 0.1]}"#;
        let a = parse_belief(toml, "b.toml").unwrap();
        assert_eq!(a, parse_belief(json, "b.json").unwrap());
        assert!(matches!(parse_belief("joint = 3\n", "b.toml"), Err(HarnessError::Parse { .. })));
        let unnormalized = "joint = [[0.8, 0.8], [0.2, 0.8]]\nmarginal = [0.9, 0.1]\n";
        assert!(matches!(parse_belief(unnormalized, "b.toml"), Err(HarnessError::Analysis(_))));
    }
}

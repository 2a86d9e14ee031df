//! Line-oriented dataset files.
//!
//! ```text
//! MCB=128 N=2 SEED=7 SCENARIO=3f9a0c11d2e4b5a6
//! beams=64,64,65,66;labels=0,0,0,1
//! ```
//!
//! Only integer beam indices and labels are stored, so a load after a save
//! reproduces the sequences exactly.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;
use crate::scenario::LabeledEpisode;

/// What the classifier sees of an episode.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BeamSequence {
    pub beams: Vec<usize>,
    pub labels: Vec<usize>,
}

impl BeamSequence {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl From<&LabeledEpisode> for BeamSequence {
    fn from(ep: &LabeledEpisode) -> Self {
        BeamSequence {
            beams: ep.beam_indices.clone(),
            labels: ep.labels.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetHeader {
    pub codebook_size: usize,
    pub num_bs: usize,
    pub seed: u64,
    /// Hex digest of the generating scenario.
    pub scenario: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub sequences: Vec<BeamSequence>,
}

impl Dataset {
    pub fn num_steps(&self) -> usize {
        self.sequences.iter().map(BeamSequence::len).sum()
    }

    fn check_record(&self, seq: &BeamSequence) -> std::result::Result<(), String> {
        if seq.is_empty() {
            return Err("empty sequence".into());
        }
        if seq.beams.len() != seq.labels.len() {
            return Err(format!(
                "{} beams but {} labels",
                seq.beams.len(),
                seq.labels.len()
            ));
        }
        if let Some(b) = seq.beams.iter().find(|&&b| b >= self.header.codebook_size) {
            return Err(format!(
                "beam index {b} not below MCB={}",
                self.header.codebook_size
            ));
        }
        if let Some(l) = seq.labels.iter().find(|&&l| l >= self.header.num_bs) {
            return Err(format!("label {l} not below N={}", self.header.num_bs));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for (i, seq) in self.sequences.iter().enumerate() {
            self.check_record(seq)
                .map_err(|m| Error::Schema(format!("record {}: {m}", i + 1)))?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let h = &self.header;
        let mut out = format!(
            "MCB={} N={} SEED={} SCENARIO={}\n",
            h.codebook_size, h.num_bs, h.seed, h.scenario
        );
        for seq in &self.sequences {
            out.push_str("beams=");
            push_list(&mut out, &seq.beams);
            out.push_str(";labels=");
            push_list(&mut out, &seq.labels);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Dataset> {
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or_else(|| Error::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let header = parse_header(first).map_err(|message| Error::Parse { line: 1, message })?;
        let mut ds = Dataset {
            header,
            sequences: Vec::new(),
        };
        for (i, line) in lines {
            let line_no = i + 1;
            if line.is_empty() {
                continue;
            }
            if line.starts_with("MCB=") {
                return Err(Error::Schema(format!("line {line_no}: second header")));
            }
            let seq = parse_record(line).map_err(|message| Error::Parse {
                line: line_no,
                message,
            })?;
            ds.check_record(&seq)
                .map_err(|m| Error::Schema(format!("line {line_no}: {m}")))?;
            ds.sequences.push(seq);
        }
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Dataset::parse(&text)
    }
}

fn push_list(out: &mut String, xs: &[usize]) {
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{x}").unwrap();
    }
}

fn parse_header(line: &str) -> std::result::Result<DatasetHeader, String> {
    let fields: Vec<&str> = line.split(' ').collect();
    let [mcb, n, seed, scenario] = fields.as_slice() else {
        return Err(format!("expected 4 header fields, found {}", fields.len()));
    };
    let value = |field: &'static str, raw: &str| -> std::result::Result<String, String> {
        raw.strip_prefix(field)
            .and_then(|r| r.strip_prefix('='))
            .map(str::to_owned)
            .ok_or_else(|| format!("expected {field}=..., found {raw:?}"))
    };
    let int = |field: &'static str, raw: &str| -> std::result::Result<u64, String> {
        value(field, raw)?
            .parse::<u64>()
            .map_err(|e| format!("{field}: {e}"))
    };
    let scenario = value("SCENARIO", scenario)?;
    if scenario.is_empty() || !scenario.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(format!("SCENARIO must be hex, found {scenario:?}"));
    }
    Ok(DatasetHeader {
        codebook_size: int("MCB", mcb)? as usize,
        num_bs: int("N", n)? as usize,
        seed: int("SEED", seed)?,
        scenario,
    })
}

fn parse_list(raw: &str) -> std::result::Result<Vec<usize>, String> {
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',')
        .map(|x| x.parse::<usize>().map_err(|e| format!("{x:?}: {e}")))
        .collect()
}

fn parse_record(line: &str) -> std::result::Result<BeamSequence, String> {
    let (beams, labels) = line
        .split_once(';')
        .ok_or_else(|| "expected beams=...;labels=...".to_string())?;
    let beams = beams
        .strip_prefix("beams=")
        .ok_or_else(|| "record must start with beams=".to_string())?;
    let labels = labels
        .strip_prefix("labels=")
        .ok_or_else(|| "expected labels= after ';'".to_string())?;
    Ok(BeamSequence {
        beams: parse_list(beams)?,
        labels: parse_list(labels)?,
    })
}

/// Shuffles whole sequences with a seeded stream and cuts at
/// `round(n * train_fraction)`, keeping both halves nonempty.
pub fn split<T: Clone>(items: &[T], train_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::contract("train_fraction must lie in (0, 1)"));
    }
    if items.len() < 2 {
        return Err(Error::contract("need at least 2 episodes to split"));
    }
    let n = items.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "split", 0));
    let cut = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..cut]), pick(&order[cut..])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header() -> DatasetHeader {
        DatasetHeader {
            codebook_size: 128,
            num_bs: 2,
            seed: 7,
            scenario: "00ff12ab".into(),
        }
    }

    fn arb_sequence() -> impl Strategy<Value = BeamSequence> {
        (1usize..30).prop_flat_map(|len| {
            (
                proptest::collection::vec(0usize..128, len),
                proptest::collection::vec(0usize..2, len),
            )
                .prop_map(|(beams, labels)| BeamSequence { beams, labels })
        })
    }

    proptest! {
        #[test]
        fn text_round_trip(seqs in proptest::collection::vec(arb_sequence(), 0..20)) {
            let ds = Dataset { header: header(), sequences: seqs };
            prop_assert_eq!(Dataset::parse(&ds.to_text()).unwrap(), ds);
        }

        #[test]
        fn split_is_a_partition(n in 2usize..60, frac in 0.05f64..0.95, seed in any::<u64>()) {
            let items: Vec<usize> = (0..n).collect();
            let (a, b) = split(&items, frac, seed).unwrap();
            prop_assert!(!a.is_empty() && !b.is_empty());
            let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, items);
        }
    }

    #[test]
    fn file_round_trip_of_100_episodes() {
        use rand::Rng;
        let mut rng = rng::stream(1, "test", 0);
        let sequences = (0..100)
            .map(|_| {
                let len = rng.random_range(1..50);
                BeamSequence {
                    beams: (0..len).map(|_| rng.random_range(0..128)).collect(),
                    labels: (0..len).map(|_| rng.random_range(0..2)).collect(),
                }
            })
            .collect();
        let ds = Dataset {
            header: header(),
            sequences,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.txt");
        ds.save(&path).unwrap();
        assert_eq!(Dataset::load(&path).unwrap(), ds);
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let ds = Dataset {
            header: header(),
            sequences: vec![],
        };
        let text = ds.to_text();
        assert_eq!(text, "MCB=128 N=2 SEED=7 SCENARIO=00ff12ab\n");
        assert_eq!(Dataset::parse(&text).unwrap(), ds);
    }

    #[test]
    fn out_of_range_beam_is_a_schema_error() {
        let text = "MCB=4 N=2 SEED=1 SCENARIO=ab\nbeams=0,4;labels=0,0\n";
        assert!(matches!(Dataset::parse(text), Err(Error::Schema(_))));
        let text = "MCB=4 N=2 SEED=1 SCENARIO=ab\nbeams=0,1;labels=0,2\n";
        assert!(matches!(Dataset::parse(text), Err(Error::Schema(_))));
        let text = "MCB=4 N=2 SEED=1 SCENARIO=ab\nbeams=0,1;labels=0\n";
        assert!(matches!(Dataset::parse(text), Err(Error::Schema(_))));
    }

    #[test]
    fn malformed_line_names_its_number() {
        let text = "MCB=4 N=2 SEED=1 SCENARIO=ab\nbeams=0;labels=0\nbeams=x;labels=0\n";
        match Dataset::parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            Dataset::parse("MCB=4 N=2 SEED=1\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            Dataset::parse(""),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let items: Vec<usize> = (0..10).collect();
        let (a, b) = split(&items, 0.8, 3).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
        assert_eq!(split(&items, 0.8, 3).unwrap(), (a, b));
        assert!(split(&items[..1], 0.5, 3).is_err());
        assert!(split(&items, 1.0, 3).is_err());
    }
}

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{ScoredCandidate, ScoredRanking};
use crate::error::{Error, Result};

/// `query_id<TAB>cand_id<TAB>output_rank<TAB>score` per candidate, in output order.
pub fn write_predictions(path: &Path, rankings: &[ScoredRanking]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in rankings {
        for e in &r.entries {
            writeln!(w, "{}\t{}\t{}\t{:.6}", r.query_id, e.cand_id, e.output_rank, e.score)
                .map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Groups lines by query id (sorted) and orders each group by output rank.
pub fn read_predictions(path: &Path) -> Result<Vec<ScoredRanking>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut groups: BTreeMap<String, Vec<ScoredCandidate>> = BTreeMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let [q, c, rank, score] = fields[..] else {
            return Err(err(format!("expected 4 tab-separated fields, found {}", fields.len())));
        };
        let output_rank = rank
            .trim()
            .parse()
            .map_err(|_| err(format!("invalid rank {rank:?}")))?;
        let score = score
            .trim()
            .parse()
            .map_err(|_| err(format!("invalid score {score:?}")))?;
        groups.entry(q.to_string()).or_default().push(ScoredCandidate {
            cand_id: c.to_string(),
            score,
            output_rank,
        });
    }
    Ok(groups
        .into_iter()
        .map(|(query_id, mut entries)| {
            entries.sort_by_key(|e| e.output_rank);
            ScoredRanking { query_id, entries }
        })
        .collect())
}

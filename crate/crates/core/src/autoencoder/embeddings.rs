use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;

use super::params::FFN_INIT_RANGE;
use crate::error::{Error, Result};
use crate::kernel::{uniform_init, Matrix};
use crate::text::{Vocabulary, PAD, UNK};

/// Builds an embedding table from a `word v1 … vd` text file.
///
/// Vocabulary words found in the file get the file vector; every other row is
/// drawn uniformly from [-0.1, 0.1). An optional `count dim` header line is
/// skipped. Returns the table and the number of rows copied from the file.
pub fn load_pretrained_embeddings(
    path: &Path,
    vocab: &Vocabulary,
    d_model: usize,
    rng: &mut impl Rng,
) -> Result<(Matrix, usize)> {
    let mut table = uniform_init(vocab.len(), d_model, -FFN_INIT_RANGE, FFN_INIT_RANGE, rng)?;
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut covered = vec![false; vocab.len()];
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let values: Vec<&str> = fields.collect();
        if lineno == 0 && values.len() == 1 && word.parse::<usize>().is_ok() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        if values.len() != d_model {
            return Err(parse_err(format!(
                "embedding dimension {} does not match model dimension {d_model}",
                values.len()
            )));
        }
        let Some(id) = vocab.get(word) else { continue };
        if id == PAD || id == UNK || covered[id] {
            continue;
        }
        for (slot, v) in table.row_mut(id).iter_mut().zip(&values) {
            *slot = v
                .parse()
                .map_err(|_| parse_err(format!("invalid number {v:?}")))?;
        }
        covered[id] = true;
    }
    Ok((table, covered.iter().filter(|&&c| c).count()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::seeded_rng;

    fn vocab() -> Vocabulary {
        Vocabulary::from_entries(vec![("visa".into(), 3), ("renew".into(), 2), ("doha".into(), 1)])
    }

    #[test]
    fn copies_present_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.txt");
        std::fs::write(&p, "3 2\nvisa 0.5 -0.25\nunknownword 1 1\nrenew 1e-3 2\n").unwrap();
        let (t, covered) = load_pretrained_embeddings(&p, &vocab(), 2, &mut seeded_rng(0)).unwrap();
        assert_eq!(covered, 2);
        assert_eq!(t.row(2), [0.5, -0.25]);
        assert_eq!(t.row(3), [1e-3, 2.0]);
        assert!(t.row(4).iter().all(|v| v.abs() <= 0.1));
    }

    #[test]
    fn full_coverage_and_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("full.txt");
        std::fs::write(&p, "visa 1 1\nrenew 2 2\ndoha 3 3\n").unwrap();
        let (_, covered) = load_pretrained_embeddings(&p, &vocab(), 2, &mut seeded_rng(0)).unwrap();
        assert_eq!(covered, vocab().len() - 2);

        let e = dir.path().join("empty.txt");
        std::fs::write(&e, "").unwrap();
        let (t, covered) = load_pretrained_embeddings(&e, &vocab(), 2, &mut seeded_rng(0)).unwrap();
        assert_eq!(covered, 0);
        assert_eq!(t.shape(), (5, 2));
    }

    #[test]
    fn wrong_dimension_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.txt");
        std::fs::write(&p, "visa 1 2 3\n").unwrap();
        assert!(load_pretrained_embeddings(&p, &vocab(), 2, &mut seeded_rng(0)).is_err());
    }
}

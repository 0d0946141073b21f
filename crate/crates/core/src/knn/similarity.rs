use std::cmp::Ordering;
use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{IdIndex, ItemIdx};
use crate::error::FormatError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub item: ItemIdx,
    pub weight: f64,
}

/// Descending weight, then ascending item index.
fn rank_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.weight.total_cmp(&a.weight).then(a.item.cmp(&b.item))
}

/// Keep the `k` best strictly positive candidates, ranked by descending
/// weight with ties broken by ascending item index.
pub fn top_k(candidates: impl IntoIterator<Item = Neighbor>, k: usize) -> Vec<Neighbor> {
    let mut list: Vec<Neighbor> = candidates.into_iter().filter(|n| n.weight > 0.0).collect();
    if list.len() > k {
        list.select_nth_unstable_by(k - 1, rank_order);
        list.truncate(k);
    }
    list.sort_unstable_by(rank_order);
    list
}

/// Per-item ranked neighbor lists, indexed by the item indices of the
/// dataset the matrix was built on.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    k: usize,
    lists: Vec<Vec<Neighbor>>,
}

impl SimilarityMatrix {
    /// Wrap neighbor lists; each list is re-ranked and cut to `k`, and self
    /// references and non-positive weights are dropped.
    pub fn from_lists(k: usize, lists: Vec<Vec<Neighbor>>) -> Self {
        assert!(k >= 1, "neighborhood size must be at least 1");
        let lists = lists
            .into_iter()
            .enumerate()
            .map(|(i, list)| {
                top_k(
                    list.into_iter().filter(|n| n.item.index() != i && n.weight.is_finite()),
                    k,
                )
            })
            .collect();
        SimilarityMatrix { k, lists }
    }

    pub(crate) fn from_ranked(k: usize, lists: Vec<Vec<Neighbor>>) -> Self {
        debug_assert!(lists.iter().all(|l| l.len() <= k));
        SimilarityMatrix { k, lists }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_items(&self) -> usize {
        self.lists.len()
    }

    pub fn neighbors(&self, item: ItemIdx) -> &[Neighbor] {
        self.lists.get(item.index()).map_or(&[], Vec::as_slice)
    }

    pub fn lists(&self) -> &[Vec<Neighbor>] {
        &self.lists
    }

    /// The `k`-prefix of every list.
    pub fn truncated(&self, k: usize) -> SimilarityMatrix {
        assert!(k >= 1, "neighborhood size must be at least 1");
        SimilarityMatrix {
            k,
            lists: self
                .lists
                .iter()
                .map(|l| l[..l.len().min(k)].to_vec())
                .collect(),
        }
    }

    /// Random baseline: every list keeps its length and weights but points
    /// at uniformly drawn distinct items other than its owner.
    pub fn shuffled(&self, seed: u64) -> SimilarityMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.lists.len();
        let lists = self
            .lists
            .iter()
            .enumerate()
            .map(|(owner, list)| {
                if list.is_empty() {
                    return Vec::new();
                }
                let mut out: Vec<Neighbor> = sample(&mut rng, n - 1, list.len())
                    .into_iter()
                    .zip(list)
                    .map(|(pick, n)| Neighbor {
                        // Skip over the owner's own index.
                        item: ItemIdx(if pick >= owner { pick + 1 } else { pick } as u32),
                        weight: n.weight,
                    })
                    .collect();
                out.sort_unstable_by(rank_order);
                out
            })
            .collect();
        SimilarityMatrix { k: self.k, lists }
    }

    /// Flat text form: a `#k=<K>` line, then one `item_id,neighbor_id,weight`
    /// line per neighbor, ordered by item index and rank. Weights use the
    /// shortest representation that parses back to the same `f64`.
    pub fn write<W: Write>(&self, items: &IdIndex, out: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(out);
        writeln!(w, "#k={}", self.k)?;
        for (i, list) in self.lists.iter().enumerate() {
            for n in list {
                writeln!(w, "{},{},{:?}", items.id(i as u32), items.id(n.item.0), n.weight)?;
            }
        }
        w.flush()
    }

    pub fn read<R: BufRead>(items: &IdIndex, input: R) -> Result<SimilarityMatrix, FormatError> {
        let mut k = None;
        let mut lists = vec![Vec::new(); items.len()];
        for (n, line) in input.lines().enumerate() {
            let line_no = n + 1;
            let err = |message: String| FormatError::Parse {
                line: line_no,
                message,
            };
            let line = line.map_err(|e| err(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("k=") {
                    k = Some(v.parse::<usize>().map_err(|e| err(e.to_string()))?);
                }
                continue;
            }
            let mut fields = line.split(',');
            let (Some(a), Some(b), Some(w), None) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(err(format!("expected `item_id,neighbor_id,weight`, got `{line}`")));
            };
            let lookup = |id: &str| {
                items
                    .get(id)
                    .map(ItemIdx)
                    .ok_or_else(|| err(format!("unknown item `{id}`")))
            };
            let (item, neighbor) = (lookup(a)?, lookup(b)?);
            let weight = w.parse::<f64>().map_err(|e| err(e.to_string()))?;
            if item == neighbor {
                return Err(err(format!("item `{a}` lists itself")));
            }
            lists[item.index()].push(Neighbor {
                item: neighbor,
                weight,
            });
        }
        let k = k.unwrap_or_else(|| lists.iter().map(Vec::len).max().unwrap_or(1).max(1));
        for (i, list) in lists.iter().enumerate() {
            if list.len() > k || list.windows(2).any(|w| rank_order(&w[0], &w[1]) != Ordering::Less) {
                return Err(FormatError::Parse {
                    line: 0,
                    message: format!("neighbor list of `{}` is not ranked or exceeds k", items.id(i as u32)),
                });
            }
        }
        Ok(SimilarityMatrix { k, lists })
    }
}

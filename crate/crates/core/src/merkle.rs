//! Binary Merkle tree over SHA-256.
//!
//! Internal nodes are `SHA-256(left || right)`. A level with an odd number
//! of nodes promotes its last node unchanged to the next level; nothing is
//! duplicated. The root of zero leaves is `SHA-256("")`.

use serde::{Deserialize, Serialize};

use crate::crypto::Hash32;

/// Which side of the running hash the sibling sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathStep {
    pub hash: Hash32,
    pub side: Side,
}

pub fn node_hash(left: &Hash32, right: &Hash32) -> Hash32 {
    Hash32::of_parts(&[left.as_bytes(), right.as_bytes()])
}

fn next_level(level: &[Hash32]) -> Vec<Hash32> {
    level
        .chunks(2)
        .map(|pair| match pair {
            [l, r] => node_hash(l, r),
            [odd] => *odd,
            _ => unreachable!(),
        })
        .collect()
}

pub fn merkle_root(leaves: &[Hash32]) -> Hash32 {
    if leaves.is_empty() {
        return Hash32::of(b"");
    }
    let mut level = leaves.to_vec();
    while level.len() > 1 {
        level = next_level(&level);
    }
    level[0]
}

/// Sibling path from leaf `index` to the root, bottom-up. Promoted levels
/// contribute no step. `None` when `index` is out of range.
pub fn merkle_path(leaves: &[Hash32], index: usize) -> Option<Vec<PathStep>> {
    if index >= leaves.len() {
        return None;
    }
    let mut path = Vec::new();
    let mut level = leaves.to_vec();
    let mut i = index;
    while level.len() > 1 {
        let sibling = i ^ 1;
        if sibling < level.len() {
            let side = if sibling < i { Side::Left } else { Side::Right };
            path.push(PathStep {
                hash: level[sibling],
                side,
            });
        }
        level = next_level(&level);
        i /= 2;
    }
    Some(path)
}

pub fn fold_path(leaf: Hash32, path: &[PathStep]) -> Hash32 {
    path.iter().fold(leaf, |acc, step| match step.side {
        Side::Left => node_hash(&step.hash, &acc),
        Side::Right => node_hash(&acc, &step.hash),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaves(n: usize) -> Vec<Hash32> {
        (0..n).map(|i| Hash32::of(&[i as u8])).collect()
    }

    #[test]
    fn small_shapes() {
        let l = leaves(3);
        assert_eq!(merkle_root(&l[..1]), l[0]);
        assert_eq!(merkle_root(&l[..2]), node_hash(&l[0], &l[1]));
        assert_eq!(merkle_root(&l), node_hash(&node_hash(&l[0], &l[1]), &l[2]));
    }

    #[test]
    fn every_path_folds_to_the_root() {
        for n in 1..=33 {
            let l = leaves(n);
            let root = merkle_root(&l);
            for (i, leaf) in l.iter().enumerate() {
                assert_eq!(fold_path(*leaf, &merkle_path(&l, i).unwrap()), root, "n={n} i={i}");
            }
            assert!(merkle_path(&l, n).is_none());
        }
    }
}

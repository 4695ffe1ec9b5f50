use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use super::UNLABELED;

/// Internal marker for pixels that take no part in segmentation at all.
pub(crate) const EXCLUDED: i32 = i32::MIN;

/// 4-neighbors of pixel `p` in a `width`×`height` grid.
#[inline]
pub(crate) fn neighbors4(p: usize, width: usize, height: usize) -> impl Iterator<Item = usize> {
    let (r, c) = (p / width, p % width);
    let up = (r > 0).then(|| p - width);
    let down = (r + 1 < height).then(|| p + width);
    let left = (c > 0).then(|| p - 1);
    let right = (c + 1 < width).then(|| p + 1);
    [up, left, right, down].into_iter().flatten()
}

/// Label 4-connected runs of equal values. Pixels for which `skip` holds get
/// `None`. Component ids follow raster order of first appearance.
pub fn connected_components(
    width: usize,
    height: usize,
    values: &[i32],
    skip: impl Fn(i32) -> bool,
) -> (Vec<Option<u32>>, Vec<usize>) {
    let mut comp: Vec<Option<u32>> = vec![None; values.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..values.len() {
        if comp[start].is_some() || skip(values[start]) {
            continue;
        }
        let id = sizes.len() as u32;
        let v = values[start];
        comp[start] = Some(id);
        queue.push_back(start);
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            for q in neighbors4(p, width, height) {
                if comp[q].is_none() && values[q] == v && !skip(values[q]) {
                    comp[q] = Some(id);
                    queue.push_back(q);
                }
            }
        }
        sizes.push(size);
    }
    (comp, sizes)
}

/// Whether a pixel set (indices into a `width`-wide grid) is one 4-connected piece.
pub fn is_four_connected(width: usize, pixels: &[usize]) -> bool {
    if pixels.is_empty() {
        return true;
    }
    let set: HashSet<usize> = pixels.iter().copied().collect();
    let mut seen = HashSet::with_capacity(set.len());
    let mut stack = vec![pixels[0]];
    seen.insert(pixels[0]);
    while let Some(p) = stack.pop() {
        let (r, c) = (p / width, p % width);
        let mut cand = Vec::with_capacity(4);
        if r > 0 {
            cand.push(p - width);
        }
        cand.push(p + width);
        if c > 0 {
            cand.push(p - 1);
        }
        if c + 1 < width {
            cand.push(p + 1);
        }
        for q in cand {
            if set.contains(&q) && seen.insert(q) {
                stack.push(q);
            }
        }
    }
    seen.len() == set.len()
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        parent[x as usize] = parent[parent[x as usize] as usize];
        x = parent[x as usize];
    }
    x
}

/// Split every label into its 4-connected pieces and merge orphan pieces into
/// the neighbor they share the longest boundary with (ties: earlier piece).
///
/// A piece is an orphan when it is unassigned (`UNLABELED`) or smaller than
/// `min_size`. `EXCLUDED` pixels never take part. The result is relabeled
/// `0..n` in raster order, with excluded pixels set to `UNLABELED`.
pub(crate) fn enforce_connectivity(
    width: usize,
    height: usize,
    labels: &[i32],
    min_size: usize,
) -> Vec<i32> {
    let (comp, sizes) = connected_components(width, height, labels, |v| v == EXCLUDED);
    let n = sizes.len();
    let mut comp_label = vec![0i32; n];
    for (p, c) in comp.iter().enumerate() {
        if let Some(c) = c {
            comp_label[*c as usize] = labels[p];
        }
    }
    let mut boundary: HashMap<(u32, u32), u32> = HashMap::new();
    for p in 0..labels.len() {
        let Some(a) = comp[p] else { continue };
        // Only right and down neighbors, so each edge is seen once.
        let (r, c) = (p / width, p % width);
        let mut check = |q: usize| {
            if let Some(b) = comp[q] {
                if a != b {
                    *boundary.entry((a, b)).or_default() += 1;
                    *boundary.entry((b, a)).or_default() += 1;
                }
            }
        };
        if c + 1 < width {
            check(p + 1);
        }
        if r + 1 < height {
            check(p + width);
        }
    }
    let mut adjacency: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n];
    for (&(a, b), &len) in &boundary {
        adjacency[a as usize].push((b, len));
    }
    for adj in &mut adjacency {
        adj.sort_unstable();
    }
    let mut parent: Vec<u32> = (0..n as u32).collect();
    for c in 0..n {
        let orphan = comp_label[c] == UNLABELED || sizes[c] < min_size;
        if !orphan {
            continue;
        }
        let me = find(&mut parent, c as u32);
        let mut shared: BTreeMap<u32, u32> = BTreeMap::new();
        for &(b, len) in &adjacency[c] {
            let root = find(&mut parent, b);
            if root != me {
                *shared.entry(root).or_default() += len;
            }
        }
        // Longest shared boundary; BTreeMap order makes ties go to the lower root.
        if let Some((&target, _)) = shared
            .iter()
            .fold(None::<(&u32, &u32)>, |best, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            })
        {
            parent[me as usize] = target;
        }
    }
    let mut remap: HashMap<u32, i32> = HashMap::new();
    let mut out = vec![UNLABELED; labels.len()];
    for p in 0..labels.len() {
        if let Some(c) = comp[p] {
            let root = find(&mut parent, c);
            let next = remap.len() as i32;
            out[p] = *remap.entry(root).or_insert(next);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn components_split_disconnected_labels() {
        let labels = vec![0, 1, 0, 0, 1, 0];
        let (comp, sizes) = connected_components(3, 2, &labels, |_| false);
        assert_eq!(sizes, vec![2, 2, 2]);
        assert_eq!(comp[0], comp[3]);
        assert_ne!(comp[0], comp[2]);
    }

    #[test]
    fn small_piece_merges_into_longest_neighbor() {
        #[rustfmt::skip]
        let labels = vec![
            0, 0, 0, 1,
            0, 2, 1, 1,
            0, 0, 1, 1,
        ];
        let out = enforce_connectivity(4, 3, &labels, 2);
        // The single pixel of label 2 touches label 0 on three sides.
        assert_eq!(out[5], out[0]);
        assert_ne!(out[0], out[3]);
    }

    #[test]
    fn unassigned_pixels_are_absorbed_and_excluded_kept_out() {
        let labels = vec![0, UNLABELED, 1, EXCLUDED];
        let out = enforce_connectivity(4, 1, &labels, 1);
        assert_eq!(out[3], UNLABELED);
        assert!(out[1] == out[0] || out[1] == out[2]);
        assert_eq!(out[1], out[0]);
    }

    #[test]
    fn four_connectivity_check() {
        assert!(is_four_connected(3, &[0, 1, 4]));
        assert!(!is_four_connected(3, &[0, 4]));
        assert!(!is_four_connected(3, &[2, 3]));
    }
}

/// Fill-reducing ordering choice for sparse factorizations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Ordering {
    #[default]
    Natural,
    MinimumDegree,
}

/// Greedy minimum-degree ordering of the graph whose edges are the
/// off-diagonal entries `(i, j)`. Returns `perm` with `perm[new] = old`.
/// Ties go to the lowest index.
pub fn minimum_degree(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let words = n.div_ceil(64);
    let mut adj = vec![vec![0u64; words]; n];
    let set = |adj: &mut Vec<Vec<u64>>, a: usize, b: usize| {
        adj[a][b / 64] |= 1 << (b % 64);
    };
    for &(i, j) in edges {
        if i != j {
            set(&mut adj, i, j);
            set(&mut adj, j, i);
        }
    }
    let mut alive = vec![true; n];
    let mut perm = Vec::with_capacity(n);
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| alive[v])
            .min_by_key(|&v| adj[v].iter().map(|w| w.count_ones()).sum::<u32>())
            .expect("a live vertex remains");
        let nbrs: Vec<usize> = (0..n)
            .filter(|&u| adj[v][u / 64] >> (u % 64) & 1 == 1)
            .collect();
        for &a in &nbrs {
            for &b in &nbrs {
                if a != b {
                    set(&mut adj, a, b);
                }
            }
            adj[a][v / 64] &= !(1 << (v % 64));
        }
        adj[v].iter_mut().for_each(|w| *w = 0);
        alive[v] = false;
        perm.push(v);
    }
    perm
}

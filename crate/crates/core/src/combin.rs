//! Lexicographic k-subset enumeration and binomial coefficients.

/// `C(n, k)` as `u128`; saturates instead of overflowing.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Iterator over the k-subsets of `0..n` in lexicographic order.
#[derive(Debug, Clone)]
pub struct Combinations {
    n: usize,
    cur: Vec<usize>,
    done: bool,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            cur: (0..k).collect(),
            done: k > n,
        }
    }

    /// Subsets whose first element is `first`, in lexicographic order.
    /// Used to split enumeration work across threads.
    pub fn with_first(n: usize, k: usize, first: usize) -> impl Iterator<Item = Vec<usize>> {
        assert!(k >= 1);
        let tail_n = n.saturating_sub(first + 1);
        Combinations::new(tail_n, k - 1).map(move |tail| {
            let mut s = Vec::with_capacity(k);
            s.push(first);
            s.extend(tail.into_iter().map(|t| t + first + 1));
            s
        })
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.cur.clone();
        let k = self.cur.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.cur[i] < self.n - k + i {
                self.cur[i] += 1;
                for j in i + 1..k {
                    self.cur[j] = self.cur[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

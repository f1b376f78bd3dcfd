//! Exact nearest-neighbor and radius search under a [`StateMetric`].
//!
//! [`KdTree`] is a static tree that prunes subtrees by the exact metric
//! distance to their bounding box. [`DynamicIndex`] supports insertion by
//! keeping a logarithmic number of static trees (Bentley-Saxe).

use crate::dynamics::StateMetric;

const LEAF: usize = 8;

#[derive(Clone, Debug)]
struct Node {
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Leaf range into `order`, or children.
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct KdTree {
    dim: usize,
    points: Vec<f64>,
    ids: Vec<usize>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    /// Builds a tree over `points` (row-major, `dim` values each) tagged
    /// with `ids`.
    pub fn build(metric: &StateMetric, points: Vec<f64>, ids: Vec<usize>) -> Self {
        let dim = metric.dim();
        assert_eq!(points.len(), ids.len() * dim);
        let n = ids.len();
        let mut tree = KdTree {
            dim,
            points,
            ids,
            order: (0..n).collect(),
            nodes: Vec::new(),
        };
        if n > 0 {
            tree.build_node(metric, 0, n);
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn build_node(&mut self, metric: &StateMetric, start: usize, end: usize) -> usize {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for &i in &self.order[start..end] {
            let p = &self.points[i * self.dim..(i + 1) * self.dim];
            for d in 0..self.dim {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let idx = self.nodes.len();
        self.nodes.push(Node {
            lo: lo.clone(),
            hi: hi.clone(),
            start,
            end,
            children: None,
        });
        if end - start <= LEAF {
            return idx;
        }
        let axis = (0..self.dim)
            .max_by(|&a, &b| {
                let sa = metric.weights[a] * (hi[a] - lo[a]);
                let sb = metric.weights[b] * (hi[b] - lo[b]);
                sa.total_cmp(&sb)
            })
            .unwrap();
        if !(hi[axis] > lo[axis]) {
            return idx;
        }
        let mid = (start + end) / 2;
        let dim = self.dim;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a * dim + axis].total_cmp(&points[b * dim + axis])
        });
        let left = self.build_node(metric, start, mid);
        let right = self.build_node(metric, mid, end);
        self.nodes[idx].children = Some((left, right));
        idx
    }

    /// Ids of all points with `dist(q, p) <= radius`, in tree order.
    pub fn within(&self, metric: &StateMetric, q: &[f64], radius: f64, out: &mut Vec<usize>) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if metric.dist_to_box(q, &node.lo, &node.hi) > radius {
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => {
                    for &i in &self.order[node.start..node.end] {
                        if metric.dist(q, self.point(i)) <= radius {
                            out.push(self.ids[i]);
                        }
                    }
                }
            }
        }
    }

    /// Nearest point strictly closer than `best.1`, updating `best` in place.
    /// Ties keep the smaller id.
    pub fn nearest_into(&self, metric: &StateMetric, q: &[f64], best: &mut Option<(usize, f64)>) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![(0usize, 0.0f64)];
        while let Some((n, bound)) = stack.pop() {
            if let Some((_, bd)) = best {
                if bound > *bd {
                    continue;
                }
            }
            let node = &self.nodes[n];
            match node.children {
                Some((l, r)) => {
                    let dl = metric.dist_to_box(q, &self.nodes[l].lo, &self.nodes[l].hi);
                    let dr = metric.dist_to_box(q, &self.nodes[r].lo, &self.nodes[r].hi);
                    if dl <= dr {
                        stack.push((r, dr));
                        stack.push((l, dl));
                    } else {
                        stack.push((l, dl));
                        stack.push((r, dr));
                    }
                }
                None => {
                    for &i in &self.order[node.start..node.end] {
                        let d = metric.dist(q, self.point(i));
                        let id = self.ids[i];
                        let better = match best {
                            None => true,
                            Some((bid, bd)) => d < *bd || (d == *bd && id < *bid),
                        };
                        if better {
                            *best = Some((id, d));
                        }
                    }
                }
            }
        }
    }

    pub fn nearest(&self, metric: &StateMetric, q: &[f64]) -> Option<(usize, f64)> {
        let mut best = None;
        self.nearest_into(metric, q, &mut best);
        best
    }
}

/// Insert-only nearest-neighbor store.
#[derive(Clone, Debug)]
pub struct DynamicIndex {
    metric: StateMetric,
    levels: Vec<Option<KdTree>>,
    buffer_points: Vec<f64>,
    buffer_ids: Vec<usize>,
    len: usize,
}

const BUFFER: usize = 16;

impl DynamicIndex {
    pub fn new(metric: StateMetric) -> Self {
        DynamicIndex {
            metric,
            levels: Vec::new(),
            buffer_points: Vec::new(),
            buffer_ids: Vec::new(),
            len: 0,
        }
    }

    pub fn metric(&self) -> &StateMetric {
        &self.metric
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn insert(&mut self, point: &[f64], id: usize) {
        assert_eq!(point.len(), self.metric.dim());
        self.buffer_points.extend_from_slice(point);
        self.buffer_ids.push(id);
        self.len += 1;
        if self.buffer_ids.len() < BUFFER {
            return;
        }
        let mut points = std::mem::take(&mut self.buffer_points);
        let mut ids = std::mem::take(&mut self.buffer_ids);
        let mut level = 0;
        loop {
            if level == self.levels.len() {
                self.levels.push(None);
            }
            match self.levels[level].take() {
                Some(tree) => {
                    points.extend_from_slice(&tree.points);
                    ids.extend_from_slice(&tree.ids);
                    level += 1;
                }
                None => {
                    self.levels[level] = Some(KdTree::build(&self.metric, points, ids));
                    break;
                }
            }
        }
    }

    pub fn nearest(&self, q: &[f64]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for tree in self.levels.iter().flatten() {
            tree.nearest_into(&self.metric, q, &mut best);
        }
        let dim = self.metric.dim();
        for (j, &id) in self.buffer_ids.iter().enumerate() {
            let d = self.metric.dist(q, &self.buffer_points[j * dim..(j + 1) * dim]);
            let better = match best {
                None => true,
                Some((bid, bd)) => d < bd || (d == bd && id < bid),
            };
            if better {
                best = Some((id, d));
            }
        }
        best
    }

    pub fn within(&self, q: &[f64], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        for tree in self.levels.iter().flatten() {
            tree.within(&self.metric, q, radius, &mut out);
        }
        let dim = self.metric.dim();
        for (j, &id) in self.buffer_ids.iter().enumerate() {
            if self.metric.dist(q, &self.buffer_points[j * dim..(j + 1) * dim]) <= radius {
                out.push(id);
            }
        }
        out.sort_unstable();
        out
    }
}

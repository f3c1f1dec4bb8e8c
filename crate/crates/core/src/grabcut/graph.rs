//! Pixel flow network and Dinic max-flow / min-cut.

/// Residual capacities below this are treated as empty.
const EPS: f64 = 1e-12;

/// A source/sink flow network over pixel nodes. N-links are symmetric;
/// t-links attach each pixel to the foreground terminal (source) and the
/// background terminal (sink). All capacities must be finite and nonnegative.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    n_pixels: usize,
    from_source: Vec<f64>,
    to_sink: Vec<f64>,
    n_links: Vec<(usize, usize, f64)>,
}

/// Max-flow value plus the min-cut partition (`true` = source / foreground
/// side). Unreachable nodes fall to the sink (background) side.
#[derive(Debug, Clone)]
pub struct MaxFlowResult {
    pub flow: f64,
    pub source_side: Vec<bool>,
}

impl FlowNetwork {
    pub fn new(n_pixels: usize) -> Self {
        Self {
            n_pixels,
            from_source: vec![0.0; n_pixels],
            to_sink: vec![0.0; n_pixels],
            n_links: Vec::new(),
        }
    }

    pub fn n_pixels(&self) -> usize {
        self.n_pixels
    }

    fn check_cap(cap: f64) -> f64 {
        assert!(cap.is_finite() && cap >= 0.0, "capacity must be finite and >= 0, got {cap}");
        cap
    }

    /// Sets terminal capacities: `from_source` is paid when the pixel ends up
    /// background, `to_sink` when it ends up foreground.
    pub fn set_terminal_caps(&mut self, pixel: usize, from_source: f64, to_sink: f64) {
        self.from_source[pixel] = Self::check_cap(from_source);
        self.to_sink[pixel] = Self::check_cap(to_sink);
    }

    /// Adds a symmetric neighborhood link.
    pub fn add_n_link(&mut self, a: usize, b: usize, cap: f64) {
        assert!(a != b && a < self.n_pixels && b < self.n_pixels);
        self.n_links.push((a, b, Self::check_cap(cap)));
    }

    pub fn terminal_caps(&self, pixel: usize) -> (f64, f64) {
        (self.from_source[pixel], self.to_sink[pixel])
    }

    pub fn n_links(&self) -> &[(usize, usize, f64)] {
        &self.n_links
    }

    /// Capacity of the cut induced by `source_side`: t-links on the wrong
    /// side plus n-links crossing the partition.
    pub fn cut_capacity(&self, source_side: &[bool]) -> f64 {
        let mut total = 0.0;
        for p in 0..self.n_pixels {
            if source_side[p] {
                total += self.to_sink[p];
            } else {
                total += self.from_source[p];
            }
        }
        for &(a, b, cap) in &self.n_links {
            if source_side[a] != source_side[b] {
                total += cap;
            }
        }
        total
    }

    /// Dinic max-flow. The returned partition is the residual-reachability
    /// cut; max-flow/min-cut duality is asserted on every solve (tolerance
    /// scales with the cut magnitude to absorb float accumulation).
    pub fn max_flow(&self) -> MaxFlowResult {
        let n = self.n_pixels + 2;
        let source = self.n_pixels;
        let sink = self.n_pixels + 1;
        let mut dinic = Dinic::new(n);
        for p in 0..self.n_pixels {
            if self.from_source[p] > 0.0 {
                dinic.add_edge(source, p, self.from_source[p], 0.0);
            }
            if self.to_sink[p] > 0.0 {
                dinic.add_edge(p, sink, self.to_sink[p], 0.0);
            }
        }
        for &(a, b, cap) in &self.n_links {
            if cap > 0.0 {
                dinic.add_edge(a, b, cap, cap);
            }
        }
        let flow = dinic.run(source, sink);
        let reachable = dinic.residual_reachable(source);
        let source_side: Vec<bool> = (0..self.n_pixels).map(|p| reachable[p]).collect();

        let cut = self.cut_capacity(&source_side);
        assert!(
            (flow - cut).abs() <= 1e-9 + 1e-12 * cut.abs(),
            "max-flow/min-cut duality violated: flow {flow} vs cut {cut}"
        );
        MaxFlowResult { flow, source_side }
    }
}

struct Edge {
    to: usize,
    cap: f64,
}

struct Dinic {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl Dinic {
    fn new(n: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); n],
            level: vec![-1; n],
            iter: vec![0; n],
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: f64, rev_cap: f64) {
        let e = self.edges.len();
        self.edges.push(Edge { to, cap });
        self.edges.push(Edge { to: from, cap: rev_cap });
        self.adj[from].push(e);
        self.adj[to].push(e + 1);
    }

    fn bfs(&mut self, source: usize, sink: usize) -> bool {
        self.level.fill(-1);
        self.level[source] = 0;
        let mut queue = std::collections::VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for &ei in &self.adj[u] {
                let e = &self.edges[ei];
                if e.cap > EPS && self.level[e.to] < 0 {
                    self.level[e.to] = self.level[u] + 1;
                    queue.push_back(e.to);
                }
            }
        }
        self.level[sink] >= 0
    }

    fn dfs(&mut self, u: usize, sink: usize, pushed: f64) -> f64 {
        if u == sink {
            return pushed;
        }
        while self.iter[u] < self.adj[u].len() {
            let ei = self.adj[u][self.iter[u]];
            let (to, cap) = (self.edges[ei].to, self.edges[ei].cap);
            if cap > EPS && self.level[to] == self.level[u] + 1 {
                let d = self.dfs(to, sink, pushed.min(cap));
                if d > EPS {
                    self.edges[ei].cap -= d;
                    self.edges[ei ^ 1].cap += d;
                    return d;
                }
            }
            self.iter[u] += 1;
        }
        0.0
    }

    fn run(&mut self, source: usize, sink: usize) -> f64 {
        let mut flow = 0.0;
        while self.bfs(source, sink) {
            self.iter.fill(0);
            loop {
                let pushed = self.dfs(source, sink, f64::INFINITY);
                if pushed <= EPS {
                    break;
                }
                flow += pushed;
            }
        }
        flow
    }

    fn residual_reachable(&self, source: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        seen[source] = true;
        let mut queue = std::collections::VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for &ei in &self.adj[u] {
                let e = &self.edges[ei];
                if e.cap > EPS && !seen[e.to] {
                    seen[e.to] = true;
                    queue.push_back(e.to);
                }
            }
        }
        seen
    }
}

/// Exhaustive minimum cut over all 2^n partitions; the test oracle for small
/// graphs.
pub fn brute_force_min_cut(network: &FlowNetwork) -> (f64, Vec<bool>) {
    let n = network.n_pixels();
    assert!(n <= 20, "brute force only for small graphs");
    let mut best = f64::INFINITY;
    let mut best_partition = vec![false; n];
    for bits in 0..(1u32 << n) {
        let partition: Vec<bool> = (0..n).map(|p| bits >> p & 1 == 1).collect();
        let cut = network.cut_capacity(&partition);
        if cut < best {
            best = cut;
            best_partition = partition;
        }
    }
    (best, best_partition)
}

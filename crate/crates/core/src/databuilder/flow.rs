//! Small integer max-flow (Edmonds-Karp on a dense capacity matrix).

use std::collections::VecDeque;

pub(crate) struct FlowNetwork {
    cap: Vec<Vec<u64>>,
    flow: Vec<Vec<i64>>,
}

impl FlowNetwork {
    pub(crate) fn new(nodes: usize) -> Self {
        Self {
            cap: vec![vec![0; nodes]; nodes],
            flow: vec![vec![0; nodes]; nodes],
        }
    }

    pub(crate) fn add_edge(&mut self, from: usize, to: usize, cap: u64) {
        self.cap[from][to] += cap;
    }

    fn residual(&self, u: usize, v: usize) -> i64 {
        self.cap[u][v] as i64 - self.flow[u][v]
    }

    pub(crate) fn max_flow(&mut self, s: usize, t: usize) -> u64 {
        let n = self.cap.len();
        let mut total = 0u64;
        loop {
            let mut parent = vec![usize::MAX; n];
            parent[s] = s;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for v in 0..n {
                    if parent[v] == usize::MAX && self.residual(u, v) > 0 {
                        parent[v] = u;
                        queue.push_back(v);
                    }
                }
            }
            if parent[t] == usize::MAX {
                return total;
            }
            let mut push = i64::MAX;
            let mut v = t;
            while v != s {
                let u = parent[v];
                push = push.min(self.residual(u, v));
                v = u;
            }
            let mut v = t;
            while v != s {
                let u = parent[v];
                self.flow[u][v] += push;
                self.flow[v][u] -= push;
                v = u;
            }
            total += push as u64;
        }
    }

    pub(crate) fn flow_on(&self, u: usize, v: usize) -> u64 {
        self.flow[u][v].max(0) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bipartite_allocation() {
        // s=0, labels 1..=2, sources 3..=4, t=5
        let mut g = FlowNetwork::new(6);
        g.add_edge(0, 1, 5);
        g.add_edge(0, 2, 5);
        g.add_edge(1, 3, 5);
        g.add_edge(2, 3, 2);
        g.add_edge(2, 4, 5);
        g.add_edge(3, 5, 6);
        g.add_edge(4, 5, 4);
        assert_eq!(g.max_flow(0, 5), 10);
        assert_eq!(g.flow_on(1, 3) + g.flow_on(2, 3), 6);
    }
}

//! Directed-graph helpers over machine topologies: strongly connected
//! components, sink (recurrent) components and the period of an irreducible
//! chain.

/// Iterative Tarjan. Returns `comp[v]` for every vertex plus the component
/// count. Component ids are assigned in reverse topological order (sinks
/// first), which is the order Tarjan naturally emits them.
pub fn strongly_connected_components(adj: &[Vec<usize>]) -> (Vec<usize>, usize) {
    const UNVISITED: usize = usize::MAX;
    let n = adj.len();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNVISITED; n];
    let mut stack: Vec<usize> = Vec::new();
    // (vertex, next edge position)
    let mut call: Vec<(usize, usize)> = Vec::new();
    let mut next_index = 0usize;
    let mut n_comp = 0usize;

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(top) = call.last_mut() {
            let v = top.0;
            if top.1 < adj[v].len() {
                let w = adj[v][top.1];
                top.1 += 1;
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp[w] = n_comp;
                    if w == v {
                        break;
                    }
                }
                n_comp += 1;
            }
        }
    }
    (comp, n_comp)
}

/// Components with no edge leaving them, each as a sorted list of vertices.
/// Components are ordered by their smallest vertex.
pub fn sink_components(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let (comp, n_comp) = strongly_connected_components(adj);
    let mut leaves = vec![true; n_comp];
    for (v, out) in adj.iter().enumerate() {
        for &w in out {
            if comp[w] != comp[v] {
                leaves[comp[v]] = false;
            }
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_comp];
    for (v, &c) in comp.iter().enumerate() {
        members[c].push(v);
    }
    let mut sinks: Vec<Vec<usize>> = members
        .into_iter()
        .enumerate()
        .filter(|(c, _)| leaves[*c])
        .map(|(_, m)| m)
        .collect();
    sinks.sort_by_key(|m| m[0]);
    sinks
}

/// Period of an irreducible graph: gcd over edges of `level(u) + 1 - level(v)`
/// with BFS levels from vertex 0. Returns 0 for an empty graph.
pub fn period(adj: &[Vec<usize>]) -> usize {
    let n = adj.len();
    if n == 0 {
        return 0;
    }
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0usize;
    for (u, out) in adj.iter().enumerate() {
        if level[u] == usize::MAX {
            continue;
        }
        for &v in out {
            let diff = (level[u] + 1).abs_diff(level[v]);
            g = gcd(g, diff);
        }
    }
    g
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cycles_joined_by_bridge() {
        // 0 <-> 1 -> 2 <-> 3
        let adj = vec![vec![1], vec![0, 2], vec![3], vec![2]];
        let (comp, n) = strongly_connected_components(&adj);
        assert_eq!(n, 2);
        assert_eq!(comp[0], comp[1]);
        assert_eq!(comp[2], comp[3]);
        assert_ne!(comp[0], comp[2]);
        assert_eq!(sink_components(&adj), vec![vec![2, 3]]);
    }

    #[test]
    fn disjoint_self_loops_are_two_sinks() {
        let adj = vec![vec![0], vec![1]];
        assert_eq!(sink_components(&adj), vec![vec![0], vec![1]]);
    }

    #[test]
    fn periods() {
        assert_eq!(period(&[vec![1], vec![0]]), 2);
        assert_eq!(period(&[vec![1], vec![2], vec![0]]), 3);
        assert_eq!(period(&[vec![0, 1], vec![0]]), 1);
        // cycle lengths 2 and 4 share period 2
        assert_eq!(period(&[vec![1, 2], vec![0], vec![3], vec![4], vec![0]]), 2);
    }

    #[test]
    fn deep_chain_does_not_overflow() {
        let n = 200_000;
        let adj: Vec<Vec<usize>> = (0..n).map(|v| vec![(v + 1) % n]).collect();
        let (_, k) = strongly_connected_components(&adj);
        assert_eq!(k, 1);
    }
}

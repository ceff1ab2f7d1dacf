use crate::distances::DistanceMatrix;
use crate::permutation::Permutation;

/// Visual assessment of tendency: the order in which Prim's algorithm adds
/// nodes, starting from the lower index of the most distant pair.
pub fn vat_order(d: &DistanceMatrix) -> Permutation {
    let n = d.n();
    if n <= 1 {
        return Permutation::identity(n);
    }
    let mut start = (f64::NEG_INFINITY, 0);
    for i in 0..n {
        for j in i + 1..n {
            if d.get(i, j) > start.0 {
                start = (d.get(i, j), i);
            }
        }
    }
    let mut visited = vec![false; n];
    let mut reach = vec![f64::INFINITY; n];
    let mut order = Vec::with_capacity(n);
    let mut current = start.1;
    loop {
        visited[current] = true;
        order.push(current);
        if order.len() == n {
            break;
        }
        let mut next = (f64::INFINITY, usize::MAX);
        for k in 0..n {
            if visited[k] {
                continue;
            }
            reach[k] = reach[k].min(d.get(current, k));
            if reach[k] < next.0 {
                next = (reach[k], k);
            }
        }
        current = next.1;
    }
    Permutation::new(order).expect("Prim visits every node once")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_starts_at_lower_end() {
        let d = DistanceMatrix::from_fn(4, |i, j| (i as f64 - j as f64).abs()).unwrap();
        assert_eq!(vat_order(&d).as_slice(), &[0, 1, 2, 3]);
    }

    #[test]
    fn trivial_sizes() {
        assert_eq!(vat_order(&DistanceMatrix::new(1, vec![0.0]).unwrap()).as_slice(), &[0]);
        let flat = DistanceMatrix::from_fn(5, |_, _| 1.0).unwrap();
        assert_eq!(vat_order(&flat).as_slice(), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn follows_nearest_neighbour_of_visited_set() {
        // 0 and 3 are the far pair; 2 is close to 0, 1 is close to 2
        let v = [[0., 5., 1., 9.], [5., 0., 1., 2.], [1., 1., 0., 8.], [9., 2., 8., 0.]];
        let d = DistanceMatrix::from_fn(4, |i, j| v[i][j]).unwrap();
        assert_eq!(vat_order(&d).as_slice(), &[0, 2, 1, 3]);
    }
}

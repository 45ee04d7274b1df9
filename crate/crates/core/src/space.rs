//! Location sets and neighbourhood structure.
//!
//! A model declares one spatial structure; building it yields the full
//! location set with a stable lexicographic order, which everything
//! downstream (state vectors, CSV columns, CTMC export) indexes into.
//! Supported structures: discrete line segment, 2D grid, 3D grid, directed
//! graph, and a nested grid-in-graph combination whose locations are
//! `(x, y, v)` triples.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// A concrete location: 1 to 3 integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Location {
    One(i64),
    Two(i64, i64),
    Three(i64, i64, i64),
}

impl Location {
    pub fn arity(&self) -> usize {
        match self {
            Location::One(_) => 1,
            Location::Two(..) => 2,
            Location::Three(..) => 3,
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::One(a) => write!(f, "{a}"),
            Location::Two(a, b) => write!(f, "({a},{b})"),
            Location::Three(a, b, c) => write!(f, "({a},{b},{c})"),
        }
    }
}

/// Adjacency-list graph over integer vertices. Lists are taken as directed;
/// a symmetric relation is encoded by listing both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDecl {
    /// vertex -> reachable vertices, in declaration order of vertices.
    pub adjacency: Vec<(i64, Vec<i64>)>,
}

impl GraphDecl {
    pub fn vertices(&self) -> impl Iterator<Item = i64> + '_ {
        self.adjacency.iter().map(|(v, _)| *v)
    }

    pub fn neighbours_of(&self, v: i64) -> Option<&[i64]> {
        self.adjacency
            .iter()
            .find(|(u, _)| *u == v)
            .map(|(_, ns)| ns.as_slice())
    }
}

/// Declared spatial structure.
#[derive(Debug, Clone, PartialEq)]
pub enum SpaceDecl {
    /// Discrete line segment with cells 1..=n.
    Line(u32),
    /// w x h grid with cells (x, y), 0-based.
    Grid2d(u32, u32),
    /// w x h x d grid with cells (x, y, z), 0-based.
    Grid3d(u32, u32, u32),
    Graph(GraphDecl),
    /// Inner grid replicated at every vertex of an outer graph; locations
    /// are (x, y, v). Inter-vertex movement lands at the entry cell.
    Nested {
        inner: Box<SpaceDecl>,
        outer: GraphDecl,
    },
}

impl SpaceDecl {
    /// Number of coordinates a location of this space carries.
    pub fn arity(&self) -> usize {
        match self {
            SpaceDecl::Line(_) | SpaceDecl::Graph(_) => 1,
            SpaceDecl::Grid2d(..) => 2,
            SpaceDecl::Grid3d(..) | SpaceDecl::Nested { .. } => 3,
        }
    }
}

/// Grid neighbourhood shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighbourhoodKind {
    VonNeumann,
    Moore,
    GraphAdjacency,
}

/// Grid boundary handling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
    Closed,
}

/// Neighbourhood selection for a space: shape plus boundary behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighbourhoodSpec {
    pub kind: NeighbourhoodKind,
    pub boundary: Boundary,
}

impl Default for NeighbourhoodSpec {
    fn default() -> Self {
        NeighbourhoodSpec {
            kind: NeighbourhoodKind::VonNeumann,
            boundary: Boundary::Periodic,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SpaceError {
    #[error("space dimension must be at least 1")]
    ZeroDimension,
    #[error("graph adjacency references undeclared vertex {0}")]
    UnknownVertex(i64),
    #[error("graph vertex {0} declared more than once")]
    DuplicateVertex(i64),
    #[error("nested spaces require a grid2d inner structure")]
    BadNestedInner,
    #[error("entry cell {0} lies outside the inner grid")]
    BadEntryCell(Location),
    #[error("location {0} is not in the location set")]
    LocationOutsideSpace(Location),
    #[error("neighbourhood kind is not applicable to this space")]
    IncompatibleNeighbourhood,
}

/// A built space: the enumerated location set with a stable total order.
#[derive(Debug, Clone, PartialEq)]
pub struct Space {
    pub decl: SpaceDecl,
    pub neighbourhood: NeighbourhoodSpec,
    /// Entry cell for inter-vertex movement in nested spaces.
    pub entry: (i64, i64),
    locations: Vec<Location>,
    index: BTreeMap<Location, usize>,
}

/// Enumerate the location set of `decl` in lexicographic coordinate order.
pub fn build_space(
    decl: SpaceDecl,
    neighbourhood: NeighbourhoodSpec,
    entry: (i64, i64),
) -> Result<Space, SpaceError> {
    let locations = enumerate_locations(&decl)?;
    match &decl {
        SpaceDecl::Graph(g) => {
            check_graph(g)?;
            if neighbourhood.kind != NeighbourhoodKind::GraphAdjacency {
                return Err(SpaceError::IncompatibleNeighbourhood);
            }
        }
        SpaceDecl::Nested { inner, outer } => {
            check_graph(outer)?;
            let (w, h) = match **inner {
                SpaceDecl::Grid2d(w, h) => (w, h),
                _ => return Err(SpaceError::BadNestedInner),
            };
            if neighbourhood.kind == NeighbourhoodKind::GraphAdjacency {
                return Err(SpaceError::IncompatibleNeighbourhood);
            }
            let (ex, ey) = entry;
            if ex < 0 || ey < 0 || ex >= w as i64 || ey >= h as i64 {
                return Err(SpaceError::BadEntryCell(Location::Two(ex, ey)));
            }
        }
        _ => {
            if neighbourhood.kind == NeighbourhoodKind::GraphAdjacency {
                return Err(SpaceError::IncompatibleNeighbourhood);
            }
        }
    }
    let index = locations.iter().enumerate().map(|(i, l)| (*l, i)).collect();
    Ok(Space {
        decl,
        neighbourhood,
        entry,
        locations,
        index,
    })
}

fn check_graph(g: &GraphDecl) -> Result<(), SpaceError> {
    let mut seen = std::collections::BTreeSet::new();
    for (v, _) in &g.adjacency {
        if !seen.insert(*v) {
            return Err(SpaceError::DuplicateVertex(*v));
        }
    }
    for (_, ns) in &g.adjacency {
        for n in ns {
            if !seen.contains(n) {
                return Err(SpaceError::UnknownVertex(*n));
            }
        }
    }
    Ok(())
}

fn enumerate_locations(decl: &SpaceDecl) -> Result<Vec<Location>, SpaceError> {
    let mut out = Vec::new();
    match decl {
        SpaceDecl::Line(n) => {
            if *n == 0 {
                return Err(SpaceError::ZeroDimension);
            }
            out.extend((1..=*n as i64).map(Location::One));
        }
        SpaceDecl::Grid2d(w, h) => {
            if *w == 0 || *h == 0 {
                return Err(SpaceError::ZeroDimension);
            }
            for x in 0..*w as i64 {
                for y in 0..*h as i64 {
                    out.push(Location::Two(x, y));
                }
            }
        }
        SpaceDecl::Grid3d(w, h, d) => {
            if *w == 0 || *h == 0 || *d == 0 {
                return Err(SpaceError::ZeroDimension);
            }
            for x in 0..*w as i64 {
                for y in 0..*h as i64 {
                    for z in 0..*d as i64 {
                        out.push(Location::Three(x, y, z));
                    }
                }
            }
        }
        SpaceDecl::Graph(g) => {
            if g.adjacency.is_empty() {
                return Err(SpaceError::ZeroDimension);
            }
            let mut vs: Vec<i64> = g.vertices().collect();
            vs.sort_unstable();
            out.extend(vs.into_iter().map(Location::One));
        }
        SpaceDecl::Nested { inner, outer } => {
            let (w, h) = match **inner {
                SpaceDecl::Grid2d(w, h) => (w, h),
                _ => return Err(SpaceError::BadNestedInner),
            };
            if w == 0 || h == 0 || outer.adjacency.is_empty() {
                return Err(SpaceError::ZeroDimension);
            }
            let mut vs: Vec<i64> = outer.vertices().collect();
            vs.sort_unstable();
            for x in 0..w as i64 {
                for y in 0..h as i64 {
                    for &v in &vs {
                        out.push(Location::Three(x, y, v));
                    }
                }
            }
            out.sort_unstable();
        }
    }
    Ok(out)
}

impl Space {
    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn contains(&self, l: &Location) -> bool {
        self.index.contains_key(l)
    }

    pub fn index_of(&self, l: &Location) -> Option<usize> {
        self.index.get(l).copied()
    }

    pub fn arity(&self) -> usize {
        self.decl.arity()
    }

    /// Neighbour set of `l` under this space's neighbourhood spec.
    ///
    /// For nested spaces this is the in-grid neighbourhood: the vertex
    /// coordinate is held fixed. Inter-vertex moves use
    /// [`Space::outer_neighbours`].
    pub fn neighbours(&self, l: &Location) -> Result<Vec<Location>, SpaceError> {
        if !self.contains(l) {
            return Err(SpaceError::LocationOutsideSpace(*l));
        }
        let spec = self.neighbourhood;
        let mut set = std::collections::BTreeSet::new();
        match (&self.decl, l) {
            (SpaceDecl::Line(n), Location::One(a)) => {
                for off in [-1i64, 1] {
                    if let Some(b) = wrap_offset(a - 1, off, *n as i64, spec.boundary) {
                        set.insert(Location::One(b + 1));
                    }
                }
            }
            (SpaceDecl::Grid2d(w, h), Location::Two(x, y)) => {
                for (dx, dy) in grid2d_offsets(spec.kind) {
                    let nx = wrap_offset(*x, dx, *w as i64, spec.boundary);
                    let ny = wrap_offset(*y, dy, *h as i64, spec.boundary);
                    if let (Some(nx), Some(ny)) = (nx, ny) {
                        set.insert(Location::Two(nx, ny));
                    }
                }
            }
            (SpaceDecl::Grid3d(w, h, d), Location::Three(x, y, z)) => {
                for (dx, dy, dz) in grid3d_offsets(spec.kind) {
                    let nx = wrap_offset(*x, dx, *w as i64, spec.boundary);
                    let ny = wrap_offset(*y, dy, *h as i64, spec.boundary);
                    let nz = wrap_offset(*z, dz, *d as i64, spec.boundary);
                    if let (Some(nx), Some(ny), Some(nz)) = (nx, ny, nz) {
                        set.insert(Location::Three(nx, ny, nz));
                    }
                }
            }
            (SpaceDecl::Graph(g), Location::One(v)) => {
                for n in g.neighbours_of(*v).unwrap_or(&[]) {
                    set.insert(Location::One(*n));
                }
            }
            (SpaceDecl::Nested { inner, .. }, Location::Three(x, y, v)) => {
                let (w, h) = match **inner {
                    SpaceDecl::Grid2d(w, h) => (w, h),
                    _ => return Err(SpaceError::BadNestedInner),
                };
                for (dx, dy) in grid2d_offsets(spec.kind) {
                    let nx = wrap_offset(*x, dx, w as i64, spec.boundary);
                    let ny = wrap_offset(*y, dy, h as i64, spec.boundary);
                    if let (Some(nx), Some(ny)) = (nx, ny) {
                        set.insert(Location::Three(nx, ny, *v));
                    }
                }
            }
            _ => return Err(SpaceError::LocationOutsideSpace(*l)),
        }
        Ok(set.into_iter().collect())
    }

    /// For nested spaces: the outer-graph neighbours of the vertex of `l`.
    pub fn outer_neighbours(&self, l: &Location) -> Result<Vec<i64>, SpaceError> {
        match (&self.decl, l) {
            (SpaceDecl::Nested { outer, .. }, Location::Three(_, _, v)) => {
                let mut vs: Vec<i64> = outer.neighbours_of(*v).unwrap_or(&[]).to_vec();
                vs.sort_unstable();
                vs.dedup();
                Ok(vs)
            }
            _ => Err(SpaceError::IncompatibleNeighbourhood),
        }
    }
}

/// A probability distribution over destination locations. Entries are
/// ordered by location; probabilities sum to 1 within 1e-12.
#[derive(Debug, Clone, PartialEq)]
pub struct DestinationDistribution {
    entries: Vec<(Location, f64)>,
}

impl DestinationDistribution {
    pub fn entries(&self) -> &[(Location, f64)] {
        &self.entries
    }

    pub fn probability_of(&self, l: &Location) -> f64 {
        self.entries
            .iter()
            .find(|(loc, _)| loc == l)
            .map(|(_, p)| *p)
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DestinationError {
    #[error("destination {0} is outside the location set")]
    OutsideSpace(Location),
    #[error("empty neighbourhood at {0}: nowhere to move")]
    EmptyNeighbourhood(Location),
    #[error("destination probabilities sum to {0}, expected 1")]
    BadSum(f64),
    #[error("`new_v` requires a nested space")]
    NotNested,
    #[error(transparent)]
    Eval(#[from] crate::expr::EvalError),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Evaluate the destination of a continuation at location `here`.
///
/// * the agent's own variables give a point mass at `here`;
/// * a literal location gives a point mass there;
/// * `new(l)` is uniform over the neighbourhood of `here` (the in-grid
///   neighbourhood for nested spaces), matching `1/n` over `U(l_1,...,l_n)`;
/// * `new_v(l)` is uniform over the outer-graph neighbours, landing at the
///   entry cell;
/// * `dist(l1[p1], ...)` evaluates each probability with `eval_prob` and
///   requires the sum to be 1 within 1e-9; the distribution is then
///   normalised by the exact sum.
pub fn eval_destination(
    space: &Space,
    dest: &crate::ast::DestinationExpr,
    here: Location,
    eval_prob: &mut dyn FnMut(&crate::expr::RateExpr) -> Result<f64, crate::expr::EvalError>,
) -> Result<DestinationDistribution, DestinationError> {
    use crate::ast::DestinationExpr;
    let entries = match dest {
        DestinationExpr::Same => vec![(here, 1.0)],
        DestinationExpr::Literal(l) => {
            if !space.contains(l) {
                return Err(DestinationError::OutsideSpace(*l));
            }
            vec![(*l, 1.0)]
        }
        DestinationExpr::New => {
            let ns = space.neighbours(&here)?;
            if ns.is_empty() {
                return Err(DestinationError::EmptyNeighbourhood(here));
            }
            let p = 1.0 / ns.len() as f64;
            ns.into_iter().map(|l| (l, p)).collect()
        }
        DestinationExpr::NewOuter => {
            let vs = space.outer_neighbours(&here).map_err(|e| match e {
                SpaceError::IncompatibleNeighbourhood => DestinationError::NotNested,
                other => DestinationError::Space(other),
            })?;
            if vs.is_empty() {
                return Err(DestinationError::EmptyNeighbourhood(here));
            }
            let p = 1.0 / vs.len() as f64;
            let (ex, ey) = space.entry;
            vs.into_iter()
                .map(|v| (Location::Three(ex, ey, v), p))
                .collect()
        }
        DestinationExpr::Empirical(items) => {
            // duplicate target locations merge, like repeated parallel terms
            let mut merged: BTreeMap<Location, f64> = BTreeMap::new();
            let mut sum = 0.0;
            for (l, expr) in items {
                if !space.contains(l) {
                    return Err(DestinationError::OutsideSpace(*l));
                }
                let p = eval_prob(expr)?;
                sum += p;
                *merged.entry(*l).or_insert(0.0) += p;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(DestinationError::BadSum(sum));
            }
            merged.into_iter().map(|(l, p)| (l, p / sum)).collect()
        }
    };
    Ok(DestinationDistribution { entries })
}

fn wrap_offset(coord: i64, off: i64, dim: i64, boundary: Boundary) -> Option<i64> {
    let raw = coord + off;
    match boundary {
        Boundary::Periodic => Some(raw.rem_euclid(dim)),
        Boundary::Closed => (0..dim).contains(&raw).then_some(raw),
    }
}

fn grid2d_offsets(kind: NeighbourhoodKind) -> Vec<(i64, i64)> {
    match kind {
        NeighbourhoodKind::VonNeumann => vec![(-1, 0), (1, 0), (0, -1), (0, 1)],
        NeighbourhoodKind::Moore => {
            let mut v = Vec::with_capacity(8);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    if (dx, dy) != (0, 0) {
                        v.push((dx, dy));
                    }
                }
            }
            v
        }
        NeighbourhoodKind::GraphAdjacency => vec![],
    }
}

fn grid3d_offsets(kind: NeighbourhoodKind) -> Vec<(i64, i64, i64)> {
    match kind {
        NeighbourhoodKind::VonNeumann => vec![
            (-1, 0, 0),
            (1, 0, 0),
            (0, -1, 0),
            (0, 1, 0),
            (0, 0, -1),
            (0, 0, 1),
        ],
        NeighbourhoodKind::Moore => {
            let mut v = Vec::with_capacity(26);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if (dx, dy, dz) != (0, 0, 0) {
                            v.push((dx, dy, dz));
                        }
                    }
                }
            }
            v
        }
        NeighbourhoodKind::GraphAdjacency => vec![],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_vertex_graph() -> GraphDecl {
        GraphDecl {
            adjacency: vec![
                (1, vec![2, 4]),
                (2, vec![1, 3, 4]),
                (3, vec![2, 4]),
                (4, vec![1, 3]),
            ],
        }
    }

    fn default_space(decl: SpaceDecl) -> Space {
        let spec = match decl {
            SpaceDecl::Graph(_) => NeighbourhoodSpec {
                kind: NeighbourhoodKind::GraphAdjacency,
                boundary: Boundary::Periodic,
            },
            _ => NeighbourhoodSpec::default(),
        };
        build_space(decl, spec, (0, 0)).unwrap()
    }

    #[test]
    fn two_cell_line_has_two_locations() {
        let s = default_space(SpaceDecl::Line(2));
        assert_eq!(s.locations(), &[Location::One(1), Location::One(2)]);
        assert_eq!(s.index_of(&Location::One(1)), Some(0));
        assert_eq!(s.index_of(&Location::One(2)), Some(1));
    }

    #[test]
    fn grid_2x1_has_two_locations() {
        let s = default_space(SpaceDecl::Grid2d(2, 1));
        assert_eq!(s.len(), 2);
        assert_eq!(s.locations()[0], Location::Two(0, 0));
        assert_eq!(s.locations()[1], Location::Two(1, 0));
    }

    #[test]
    fn four_vertex_graph_has_four_locations() {
        let s = default_space(SpaceDecl::Graph(four_vertex_graph()));
        assert_eq!(s.len(), 4);
    }

    #[test]
    fn nested_grid_in_graph_has_36_locations() {
        let s = default_space(SpaceDecl::Nested {
            inner: Box::new(SpaceDecl::Grid2d(3, 3)),
            outer: four_vertex_graph(),
        });
        assert_eq!(s.len(), 36);
    }

    #[test]
    fn zero_dimension_rejected() {
        assert_eq!(
            build_space(SpaceDecl::Line(0), NeighbourhoodSpec::default(), (0, 0)),
            Err(SpaceError::ZeroDimension)
        );
    }

    #[test]
    fn periodic_von_neumann_on_2x2_collapses_wraps() {
        let s = default_space(SpaceDecl::Grid2d(2, 2));
        let ns = s.neighbours(&Location::Two(0, 0)).unwrap();
        assert_eq!(ns, vec![Location::Two(0, 1), Location::Two(1, 0)]);
    }

    #[test]
    fn graph_neighbours_follow_adjacency() {
        let s = default_space(SpaceDecl::Graph(four_vertex_graph()));
        let ns = s.neighbours(&Location::One(2)).unwrap();
        assert_eq!(
            ns,
            vec![Location::One(1), Location::One(3), Location::One(4)]
        );
    }

    #[test]
    fn closed_corner_has_two_neighbours() {
        let s = build_space(
            SpaceDecl::Grid2d(3, 3),
            NeighbourhoodSpec {
                kind: NeighbourhoodKind::VonNeumann,
                boundary: Boundary::Closed,
            },
            (0, 0),
        )
        .unwrap();
        let ns = s.neighbours(&Location::Two(0, 0)).unwrap();
        assert_eq!(ns, vec![Location::Two(0, 1), Location::Two(1, 0)]);
    }

    #[test]
    fn periodic_line_of_two_wraps_to_single_neighbour() {
        let s = default_space(SpaceDecl::Line(2));
        assert_eq!(
            s.neighbours(&Location::One(1)).unwrap(),
            vec![Location::One(2)]
        );
        assert_eq!(
            s.neighbours(&Location::One(2)).unwrap(),
            vec![Location::One(1)]
        );
    }

    #[test]
    fn nested_neighbours_keep_vertex_fixed() {
        let s = default_space(SpaceDecl::Nested {
            inner: Box::new(SpaceDecl::Grid2d(3, 3)),
            outer: four_vertex_graph(),
        });
        let ns = s.neighbours(&Location::Three(0, 0, 1)).unwrap();
        assert_eq!(ns.len(), 4);
        assert!(ns.iter().all(|l| matches!(l, Location::Three(_, _, 1))));
        let outer = s.outer_neighbours(&Location::Three(0, 0, 1)).unwrap();
        assert_eq!(outer, vec![2, 4]);
    }

    #[test]
    fn neighbour_of_outside_location_errors() {
        let s = default_space(SpaceDecl::Line(2));
        assert_eq!(
            s.neighbours(&Location::One(3)),
            Err(SpaceError::LocationOutsideSpace(Location::One(3)))
        );
    }

    #[test]
    fn destination_point_mass_on_two_cell_line() {
        // §-style: new(l) on the 2-cell space sends 1 to 2 and 2 to 1.
        let s = default_space(SpaceDecl::Line(2));
        let d = eval_destination(
            &s,
            &crate::ast::DestinationExpr::New,
            Location::One(1),
            &mut |_| unreachable!(),
        )
        .unwrap();
        assert_eq!(d.entries(), &[(Location::One(2), 1.0)]);
    }

    #[test]
    fn destination_uniform_over_graph_neighbours() {
        let s = default_space(SpaceDecl::Graph(four_vertex_graph()));
        let d = eval_destination(
            &s,
            &crate::ast::DestinationExpr::New,
            Location::One(2),
            &mut |_| unreachable!(),
        )
        .unwrap();
        assert_eq!(
            d.entries(),
            &[
                (Location::One(1), 1.0 / 3.0),
                (Location::One(3), 1.0 / 3.0),
                (Location::One(4), 1.0 / 3.0),
            ]
        );
    }

    #[test]
    fn destination_outer_move_lands_at_entry_cell() {
        let s = default_space(SpaceDecl::Nested {
            inner: Box::new(SpaceDecl::Grid2d(3, 3)),
            outer: four_vertex_graph(),
        });
        let d = eval_destination(
            &s,
            &crate::ast::DestinationExpr::NewOuter,
            Location::Three(2, 1, 1),
            &mut |_| unreachable!(),
        )
        .unwrap();
        assert_eq!(
            d.entries(),
            &[
                (Location::Three(0, 0, 2), 0.5),
                (Location::Three(0, 0, 4), 0.5),
            ]
        );
    }

    #[test]
    fn empirical_destination_requires_unit_sum() {
        let s = default_space(SpaceDecl::Line(2));
        let dest = crate::ast::DestinationExpr::Empirical(vec![
            (Location::One(1), crate::expr::RateExpr::Num(0.5)),
            (Location::One(2), crate::expr::RateExpr::Num(0.4)),
        ]);
        let err = eval_destination(&s, &dest, Location::One(1), &mut |e| {
            crate::expr::eval(e, &NoEnv)
        })
        .unwrap_err();
        assert!(matches!(err, DestinationError::BadSum(_)));
    }

    struct NoEnv;
    impl crate::expr::ExprEnv for NoEnv {
        fn param(&self, _: &str) -> Option<f64> {
            None
        }
        fn count(
            &self,
            _: &str,
            _: &crate::expr::CountLoc,
        ) -> Result<f64, crate::expr::EvalError> {
            Ok(0.0)
        }
    }

    #[test]
    fn moore_neighbourhood_on_3x3_periodic_has_eight() {
        let s = build_space(
            SpaceDecl::Grid2d(3, 3),
            NeighbourhoodSpec {
                kind: NeighbourhoodKind::Moore,
                boundary: Boundary::Periodic,
            },
            (0, 0),
        )
        .unwrap();
        assert_eq!(s.neighbours(&Location::Two(1, 1)).unwrap().len(), 8);
        assert_eq!(s.neighbours(&Location::Two(0, 0)).unwrap().len(), 8);
    }
}

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flatsphere::billiards::{double_polygon, enumerate_generalized_diagonals, enumerate_periodic_families, BilliardError, Polygon};
use flatsphere::bounds::{constant_set, count_within, log2_diag_bound, log2_per_bound, verify_bounds, BoundsError};
use flatsphere::delaunay::{delaunay_complex, delaunay_triangulation, DelaunayError};
use flatsphere::enumerator::{count_table, cylinders_from_connections, enumerate_with_triangulation, EnumError};
use flatsphere::fixtures::{build_example, random_convex_polygon, ExampleFamily};
use flatsphere::geom::Vec2;
use flatsphere::infinite::{core_of_infinite_sphere, count_saddle_connections_infinite, random_infinite_sphere, InfiniteError, InfiniteFlatSphere};
use flatsphere::io::{infinite_json, parse_infinite, parse_polygon, polygon_json, read_surface, surface_json, InfiniteFile, SurfaceFile};
use flatsphere::surface::{curvature_gap, validate, FlatConeSurface, SurfaceError, DEFAULT_TOL};
use flatsphere::surgery::{convex_hull, generalized_surgery, surgery_along_saddle_connection, ConvexHull, SurgeryError};
use flatsphere::tracer::{corner_switches, self_intersection_number, trace_from_cone, trace_with, transfer, Start, SurfacePoint, TraceError, TraceOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use output::{Format, Table};

#[derive(Parser)]
#[command(name = "flatsphere", version, about = "Flat cone spheres: tracing, saddle connections, surgery and billiards")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Geometric tolerance used when reading surfaces.
    #[arg(long, global = true, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Worker threads for parallel enumeration (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized surface generation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Emit JSON.
    #[arg(long, global = true, conflicts_with = "csv")]
    json: bool,
    /// Emit CSV.
    #[arg(long, global = true)]
    csv: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check cone angles, curvatures, Gauss-Bonnet and topology.
    Validate { surface: PathBuf },
    /// Trace a geodesic from a point or a corner.
    Trace(TraceArgs),
    /// Delaunay triangulation by edge flips.
    Delaunay { surface: PathBuf },
    /// Saddle connections and cylinders up to a length.
    Enumerate {
        surface: PathBuf,
        #[arg(long)]
        max_length: f64,
        #[arg(long, value_enum, default_value_t = Kind::Both)]
        kind: Kind,
        /// Rescale to area one first.
        #[arg(long)]
        normalize_area: bool,
    },
    /// Counting functions N_sc and N_cg on a grid `start:stop:step`.
    Count {
        surface: PathBuf,
        #[arg(long, value_parser = parse_grid)]
        grid: Grid,
        #[arg(long)]
        normalize_area: bool,
    },
    /// Uniform and per-surface constants.
    Constants { surface: PathBuf },
    /// Check the length bounds on every geodesic up to a normalized length.
    Verify {
        surface: PathBuf,
        #[arg(long)]
        max_length: f64,
    },
    /// Collapse cone points by surgery; writes top.json and infinitesimal_<k>.json.
    Surgery {
        surface: PathBuf,
        /// Labels of the cone points to merge.
        #[arg(long, value_delimiter = ',', required = true)]
        collapse: Vec<usize>,
        /// Enclosing loop as label pairs `a-b,b-c,c-a`, with the cluster on its left.
        /// Each side is the shortest saddle connection between its labels.
        #[arg(long = "loop", value_delimiter = ',')]
        loop_edges: Vec<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Core of an infinite flat sphere and its saddle connections.
    Core { infinite: PathBuf },
    /// Generalized diagonals or periodic families of a polygon.
    Billiard {
        polygon: PathBuf,
        #[arg(long)]
        max_length: f64,
        #[arg(long, value_enum, default_value_t = BilliardKind::Diag)]
        kind: BilliardKind,
        /// Rescale the polygon to area one first.
        #[arg(long)]
        normalize: bool,
    },
    /// Build an example surface with its designated trajectory.
    Example(ExampleArgs),
}

#[derive(Args)]
struct TraceArgs {
    surface: PathBuf,
    #[arg(long)]
    face: usize,
    /// Start point `x,y` in the face chart.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true, required_unless_present = "corner")]
    at: Option<Vec2>,
    /// Start at this corner of the face instead of a point.
    #[arg(long)]
    corner: Option<usize>,
    /// Direction `dx,dy` in the face chart.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    dir: Vec2,
    #[arg(long)]
    budget: f64,
    #[arg(long, value_enum, default_value_t = Triangulation::Given)]
    triangulation: Triangulation,
}

#[derive(Args)]
struct ExampleArgs {
    #[arg(value_enum)]
    family: Family,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    x: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    /// Vertex count for random-polygon, conical point count for random-infinite.
    #[arg(long, default_value_t = 5)]
    n: usize,
    /// Write the surface here; the trajectory descriptor goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Sc,
    Cyl,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BilliardKind {
    Diag,
    Per,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Triangulation {
    Given,
    Delaunay,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    FagnanoCut,
    B2Witness,
    C2Witness,
    DeltaWitness,
    /// Double of a random convex polygon.
    RandomPolygon,
    /// Random infinite flat sphere, for `core`.
    RandomInfinite,
}

#[derive(Clone, Debug)]
struct Grid(Vec<f64>);

fn parse_pair(s: &str) -> Result<Vec2, String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected x,y but got {s:?}"))?;
    let p = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok(Vec2::new(p(a)?, p(b)?))
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<f64> = s.split(':').map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"))).collect::<Result<_, _>>()?;
    let [a, b, h] = parts[..] else {
        return Err(format!("expected start:stop:step but got {s:?}"));
    };
    if !(h > 0.0) || b < a {
        return Err("grid needs step > 0 and stop >= start".into());
    }
    let steps = ((b - a) / h + 1e-9).floor() as usize;
    Ok(Grid((0..=steps).map(|i| a + i as f64 * h).collect()))
}

/// Exit status: 1 usage or input error, 2 failed verification, 3 numeric pathology.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(m: impl ToString) -> Failure {
        Failure { code: 1, message: m.to_string() }
    }
    fn verification(m: impl ToString) -> Failure {
        Failure { code: 2, message: m.to_string() }
    }
    fn numeric(m: impl ToString) -> Failure {
        Failure { code: 3, message: m.to_string() }
    }
}

fn trace_code(e: &TraceError) -> u8 {
    match e {
        TraceError::VertexGrazing { .. } | TraceError::ThreadCap(_) | TraceError::TangentialOverlap { .. } => 3,
        TraceError::DegenerateStart(_) | TraceError::ContainedInEdge => 1,
    }
}

fn delaunay_code(e: &DelaunayError) -> u8 {
    match e {
        DelaunayError::FlipNonTermination { .. } => 3,
        _ => 1,
    }
}

fn enum_code(e: &EnumError) -> u8 {
    match e {
        EnumError::Delaunay(d) => delaunay_code(d),
        EnumError::Trace(t) => trace_code(t),
    }
}

macro_rules! failure_from {
    ($t:ty, $code:expr) => {
        impl From<$t> for Failure {
            fn from(e: $t) -> Failure {
                #[allow(clippy::redundant_closure_call)]
                let code = ($code)(&e);
                Failure { code, message: e.to_string() }
            }
        }
    };
}

failure_from!(SurfaceError, |_: &SurfaceError| 1);
failure_from!(TraceError, trace_code);
failure_from!(DelaunayError, delaunay_code);
failure_from!(EnumError, enum_code);
failure_from!(BoundsError, |e: &BoundsError| match e {
    BoundsError::Enum(x) => enum_code(x),
    _ => 1,
});
failure_from!(SurgeryError, |e: &SurgeryError| match e {
    SurgeryError::Enum(x) => enum_code(x),
    SurgeryError::Trace(x) => trace_code(x),
    SurgeryError::TighteningCap(_) => 3,
    _ => 1,
});
failure_from!(BilliardError, |e: &BilliardError| match e {
    BilliardError::Enum(x) => enum_code(x),
    BilliardError::Trace(x) => trace_code(x),
    BilliardError::Delaunay(x) => delaunay_code(x),
    _ => 1,
});
failure_from!(InfiniteError, |e: &InfiniteError| match e {
    InfiniteError::Enum(x) => enum_code(x),
    _ => 1,
});

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    let g = &cli.global;
    let fmt = |default: Format| {
        if g.json {
            Format::Json
        } else if g.csv {
            Format::Csv
        } else {
            default
        }
    };
    match &cli.command {
        Command::Validate { surface } => cmd_validate(g, surface, fmt(Format::Json)),
        Command::Trace(a) => cmd_trace(g, a, fmt(Format::Json)),
        Command::Delaunay { surface } => cmd_delaunay(g, surface, fmt(Format::Json)),
        Command::Enumerate { surface, max_length, kind, normalize_area } => {
            cmd_enumerate(g, surface, *max_length, *kind, *normalize_area, fmt(Format::Csv))
        }
        Command::Count { surface, grid, normalize_area } => cmd_count(g, surface, grid, *normalize_area, fmt(Format::Csv)),
        Command::Constants { surface } => {
            let s = read_surface(surface, g.tol)?;
            output::emit_value(&serde_json::to_value(constant_set(&s)?).unwrap(), fmt(Format::Json));
            Ok(())
        }
        Command::Verify { surface, max_length } => cmd_verify(g, surface, *max_length, fmt(Format::Csv)),
        Command::Surgery { surface, collapse, loop_edges, out } => cmd_surgery(g, surface, collapse, loop_edges, out, fmt(Format::Json)),
        Command::Core { infinite } => cmd_core(g, infinite, fmt(Format::Json)),
        Command::Billiard { polygon, max_length, kind, normalize } => cmd_billiard(polygon, *max_length, *kind, *normalize, fmt(Format::Csv)),
        Command::Example(a) => cmd_example(g, a, fmt(Format::Json)),
    }
}

fn load(g: &Global, path: &Path, normalize: bool) -> Result<FlatConeSurface, Failure> {
    let s = read_surface(path, g.tol)?;
    Ok(if normalize { s.normalized() } else { s })
}

fn cmd_validate(g: &Global, path: &Path, fmt: Format) -> Outcome {
    // Unreadable input is a usage error; a surface that does not assemble fails validation.
    let s = match read_surface(path, g.tol) {
        Ok(s) => s,
        Err(e @ SurfaceError::Parse(_)) => return Err(e.into()),
        Err(e) => {
            output::emit_value(&json!({"pass": false, "tolerance": g.tol, "failures": [e.to_string()]}), fmt);
            return Err(Failure::verification(e));
        }
    };
    let report = validate(&s);
    output::emit_value(&serde_json::to_value(&report).unwrap(), fmt);
    if report.pass {
        Ok(())
    } else {
        Err(Failure::verification(format!("{} check(s) failed", report.failures.len())))
    }
}

fn cmd_trace(g: &Global, a: &TraceArgs, fmt: Format) -> Outcome {
    let s = read_surface(&a.surface, g.tol)?;
    if a.face >= s.num_faces() {
        return Err(Failure::usage(format!("face {} out of range (surface has {})", a.face, s.num_faces())));
    }
    let original = s.complex();
    let delaunay;
    let c = match a.triangulation {
        Triangulation::Given => original,
        Triangulation::Delaunay => {
            delaunay = delaunay_complex(original)?.0;
            &delaunay
        }
    };
    let budget = a.budget;
    let traj = match (a.corner, a.at) {
        (Some(i), _) => {
            if i > 2 {
                return Err(Failure::usage("corner must be 0, 1 or 2"));
            }
            let v = original.vertex(a.face, i);
            let label = original.label(v);
            let angle = original.absolute_angle(a.face, i, a.dir.unit());
            if a.triangulation == Triangulation::Given {
                let opts = TraceOptions::default();
                trace_with(c, Start::Corner { face: a.face, corner: i }, a.dir, budget, opts)?
            } else {
                trace_from_cone(c, c.vertex_by_label(label).unwrap(), angle, budget)?
            }
        }
        (None, Some(p)) => {
            let (sp, d) = match a.triangulation {
                Triangulation::Given => (SurfacePoint { face: a.face, point: p }, a.dir),
                Triangulation::Delaunay => transfer(original, c, SurfacePoint { face: a.face, point: p }, a.dir)?,
            };
            trace_with(c, Start::Point(sp), d, budget, TraceOptions::default())?
        }
        (None, None) => return Err(Failure::usage("give --at or --corner")),
    };
    let iota = match self_intersection_number(c, &traj) {
        Ok(i) => json!(i),
        Err(e) => json!(e.to_string()),
    };
    let switches = corner_switches(c, &traj);
    match fmt {
        Format::Csv => {
            let mut t = Table::new(&["thread", "face", "entry_x", "entry_y", "exit_x", "exit_y", "length"]);
            for (k, th) in traj.threads.iter().enumerate() {
                t.row(vec![k.to_string(), th.face.to_string(), num(th.entry.x), num(th.entry.y), num(th.exit.x), num(th.exit.y), num(th.length)]);
            }
            t.print();
        }
        Format::Json => {
            let threads: Vec<Value> = traj
                .threads
                .iter()
                .map(|th| json!({"face": th.face, "entry": [th.entry.x, th.entry.y], "exit": [th.exit.x, th.exit.y], "length": th.length}))
                .collect();
            let v = json!({
                "threads": threads,
                "combinatorial_length": traj.combinatorial_length(),
                "length": traj.length,
                "closed": traj.closed,
                "iota": iota,
                "corner_switches": switches,
                "end_status": traj.end,
            });
            output::emit_value(&v, fmt);
        }
    }
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn cmd_delaunay(g: &Global, path: &Path, fmt: Format) -> Outcome {
    let s = read_surface(path, g.tol)?;
    let t = delaunay_triangulation(&s)?;
    match fmt {
        Format::Csv => {
            let mut tab = Table::new(&["face", "edge", "start", "end", "length", "width", "opposite_angle_sum", "delaunay"]);
            for e in &t.edges {
                tab.row(vec![
                    e.edge.face.to_string(),
                    e.edge.edge.to_string(),
                    e.endpoints.0.to_string(),
                    e.endpoints.1.to_string(),
                    num(e.length),
                    num(e.width),
                    num(e.opposite_angle_sum),
                    e.delaunay.to_string(),
                ]);
            }
            tab.print();
        }
        Format::Json => {
            let edges: Vec<Value> = t
                .edges
                .iter()
                .map(|e| json!({"endpoints": [e.endpoints.0, e.endpoints.1], "length": e.length, "width": e.width}))
                .collect();
            let v = json!({
                "edges": edges,
                "d_T": t.width(),
                "R_T": t.max_circumradius(),
                "flips_performed": t.flips,
                "surface": serde_json::to_value(SurfaceFile::from_complex(t.complex())).unwrap(),
            });
            output::emit_value(&v, fmt);
        }
    }
    Ok(())
}

fn cmd_enumerate(g: &Global, path: &Path, r: f64, kind: Kind, normalize: bool, fmt: Format) -> Outcome {
    let s = load(g, path, normalize)?;
    let tri = delaunay_triangulation(&s)?;
    let res = enumerate_with_triangulation(&tri, r)?;
    let cyl = if kind == Kind::Sc { Vec::new() } else { cylinders_from_connections(tri.complex(), &res.connections, r)? };
    let mut tab = Table::new(&["kind", "length", "iota", "endpoints", "corridor_depth"]);
    if kind != Kind::Cyl {
        for sc in &res.connections {
            tab.row(vec!["sc".into(), num(sc.length), sc.iota.to_string(), format!("{}-{}", sc.start, sc.end), sc.depth().to_string()]);
        }
    }
    for c in &cyl {
        let ends: Vec<String> = c.boundary.iter().map(|l| l.to_string()).collect();
        tab.row(vec!["cyl".into(), num(c.circumference), c.iota.to_string(), ends.join("-"), c.corridor.len().to_string()]);
    }
    match fmt {
        Format::Csv => tab.print(),
        Format::Json => output::emit_value(
            &json!({"rows": tab.to_json(), "depth_cap": res.depth_cap, "max_depth": res.max_depth, "cap_hit": res.cap_hit}),
            fmt,
        ),
    }
    if res.cap_hit {
        return Err(Failure::numeric(format!("corridor depth cap {} reached", res.depth_cap)));
    }
    Ok(())
}

fn cmd_count(g: &Global, path: &Path, grid: &Grid, normalize: bool, fmt: Format) -> Outcome {
    let s = load(g, path, normalize)?;
    let rmax = grid.0.iter().cloned().fold(0.0, f64::max);
    let tri = delaunay_triangulation(&s)?;
    let res = enumerate_with_triangulation(&tri, rmax)?;
    let cyl = cylinders_from_connections(tri.complex(), &res.connections, rmax)?;
    let mut tab = Table::new(&["R", "N_sc", "N_cg"]);
    for row in count_table(&res.connections, &cyl, &grid.0) {
        tab.row(vec![num(row.r), row.n_sc.to_string(), row.n_cg.to_string()]);
    }
    tab.emit(fmt);
    if res.cap_hit {
        return Err(Failure::numeric(format!("corridor depth cap {} reached", res.depth_cap)));
    }
    Ok(())
}

fn cmd_verify(g: &Global, path: &Path, r: f64, fmt: Format) -> Outcome {
    let s = read_surface(path, g.tol)?;
    let report = verify_bounds(&s, r)?;
    match fmt {
        Format::Json => output::emit_value(&serde_json::to_value(&report).unwrap(), fmt),
        Format::Csv => {
            let mut tab = Table::new(&["kind", "length", "iota", "individual_lower", "uniform_lower", "uniform_upper", "closed_ok", "pass"]);
            for row in &report.rows {
                tab.row(vec![
                    serde_json::to_value(row.kind).unwrap().as_str().unwrap_or("").to_string(),
                    num(row.length),
                    row.iota.to_string(),
                    num(row.individual_lower),
                    num(row.uniform_lower),
                    num(row.uniform_upper),
                    row.closed_ok.map(|b| b.to_string()).unwrap_or_default(),
                    row.pass().to_string(),
                ]);
            }
            tab.print();
        }
    }
    let bad = report.violations().count();
    if bad > 0 {
        return Err(Failure::verification(format!("{bad} geodesic(s) violate a bound")));
    }
    Ok(())
}

/// Shortest saddle connection between two labels, searching outward from the relative systole.
fn shortest_between(s: &FlatConeSurface, a: usize, b: usize) -> Result<flatsphere::enumerator::SaddleConnection, Failure> {
    let tri = delaunay_triangulation(s)?;
    let mut r = tri.shortest_edge().max(1e-9);
    let diam = 4.0 * s.area().sqrt() + tri.max_circumradius() * s.num_faces() as f64;
    while r <= 4.0 * diam {
        let res = enumerate_with_triangulation(&tri, r)?;
        let hit = res
            .connections
            .iter()
            .filter(|x| (x.start == a && x.end == b) || (x.start == b && x.end == a))
            .min_by(|x, y| x.length.partial_cmp(&y.length).unwrap());
        if let Some(x) = hit {
            let x = if x.start == a { x.clone() } else { x.reversed(tri.complex()) };
            // Redo on the input triangulation so hull routines see its charts.
            let v = s.vertex_by_label(a).unwrap();
            let t = trace_from_cone(s, v, x.start_angle, x.length * (1.0 + 1e-7) + 10.0 * s.tol())?;
            return flatsphere::enumerator::from_trajectory(s, &t)?
                .ok_or_else(|| Failure::numeric(format!("connection {a}-{b} did not retrace")));
        }
        r *= 2.0;
    }
    Err(Failure::usage(format!("no saddle connection joins {a} and {b}")))
}

fn cmd_surgery(g: &Global, path: &Path, collapse: &[usize], loop_edges: &[String], out: &Path, fmt: Format) -> Outcome {
    let s = read_surface(path, g.tol)?;
    for &l in collapse {
        if s.vertex_by_label(l).is_none() {
            return Err(Failure::usage(format!("no cone point labelled {l}")));
        }
    }
    let result = if collapse.len() == 2 && loop_edges.is_empty() {
        let sc = shortest_between(&s, collapse[0], collapse[1])?;
        surgery_along_saddle_connection(&s, &sc)?
    } else {
        let pairs: Vec<(usize, usize)> = if loop_edges.is_empty() {
            (0..collapse.len()).map(|i| (collapse[i], collapse[(i + 1) % collapse.len()])).collect()
        } else {
            loop_edges
                .iter()
                .map(|e| {
                    let (a, b) = e.split_once('-').ok_or_else(|| Failure::usage(format!("loop edge {e:?} is not a-b")))?;
                    let p = |t: &str| t.trim().parse::<usize>().map_err(|_| Failure::usage(format!("bad label {t:?}")));
                    Ok((p(a)?, p(b)?))
                })
                .collect::<Result<_, Failure>>()?
        };
        let hull = if collapse.len() == 1 {
            ConvexHull::point(collapse[0])
        } else {
            let sides = pairs.iter().map(|&(a, b)| shortest_between(&s, a, b)).collect::<Result<Vec<_>, _>>()?;
            convex_hull(&s, collapse, sides)?
        };
        generalized_surgery(&s, &[hull])?
    };
    std::fs::create_dir_all(out).map_err(|e| Failure::usage(format!("{}: {e}", out.display())))?;
    let write = |name: String, body: String| {
        let p = out.join(name);
        std::fs::write(&p, body).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))
    };
    write("top.json".into(), surface_json(result.top.complex()))?;
    for (k, x) in result.infinitesimal.iter().enumerate() {
        write(format!("infinitesimal_{k}.json"), infinite_json(x))?;
    }
    let top = validate(&result.top);
    let cones: Vec<Value> = result
        .added_cones
        .iter()
        .map(|c| json!({"apex_label": c.apex_label, "curvature": c.curvature, "area": c.area, "side_lengths": c.side_lengths}))
        .collect();
    let v = json!({
        "top_curvatures": result.top.cone_points.iter().map(|c| json!({"label": c.label, "curvature": c.curvature})).collect::<Vec<_>>(),
        "area_before": s.area(),
        "area_after": result.top.area(),
        "hull_areas": result.hull_areas,
        "added_cones": cones,
        "infinitesimal_spheres": result.infinitesimal.len(),
        "top_valid": top.pass,
    });
    output::emit_value(&v, fmt);
    if !top.pass {
        return Err(Failure::verification("top sphere fails validation"));
    }
    Ok(())
}

fn cmd_core(g: &Global, path: &Path, fmt: Format) -> Outcome {
    let body = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let x = parse_infinite(&body, g.tol)?;
    let core = core_of_infinite_sphere(&x)?;
    let (count, _) = count_saddle_connections_infinite(&x)?;
    let core_sphere = InfiniteFlatSphere { domain: core.domain.clone(), boundary: core.boundary.clone() };
    let v = json!({
        "curvatures": x.curvatures(),
        "pole_curvature": x.pole_curvature(),
        "core": serde_json::to_value(InfiniteFile::from_sphere(&core_sphere)).unwrap(),
        "core_triangles_added": core.added,
        "census": serde_json::to_value(&count).unwrap(),
    });
    output::emit_value(&v, fmt);
    if count.cap_hit {
        return Err(Failure::numeric(format!("combinatorial cap {} reached", count.depth_cap)));
    }
    if !count.pass {
        return Err(Failure::verification(format!("{} saddle connections exceed 2^{}", count.count, count.log2_bound)));
    }
    Ok(())
}

fn cmd_billiard(path: &Path, r: f64, kind: BilliardKind, normalize: bool, fmt: Format) -> Outcome {
    let body = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let mut p = parse_polygon(&body)?;
    if normalize {
        p = p.normalized();
    }
    let double = double_polygon(&p)?;
    let k = double.surface.curvatures();
    let (n, delta) = (k.len(), curvature_gap(&k));
    let (paths, label, log2_bound) = match kind {
        BilliardKind::Diag => {
            let d = enumerate_generalized_diagonals(&p, r)?;
            let rows: Vec<(f64, _)> = d.into_iter().map(|x| (x.length(), x)).collect();
            (rows, "diag", log2_diag_bound(n, delta, r).ok())
        }
        BilliardKind::Per => {
            let f = enumerate_periodic_families(&p, r)?;
            let rows: Vec<(f64, _)> = f.into_iter().map(|x| (x.length, x.path)).collect();
            (rows, "per", log2_per_bound(n, delta, r).ok())
        }
    };
    let count = paths.len();
    // The bound is stated for area-one polygons.
    let unit_area = (p.area() - 1.0).abs() < 1e-9;
    let pass = match (log2_bound, unit_area) {
        (Some(b), true) => Some(count_within(count, b)),
        _ => None,
    };
    let mut tab = Table::new(&["kind", "length", "segments", "points"]);
    for (len, path) in &paths {
        let pts: Vec<String> = path.points.iter().map(|q| format!("{} {}", q.x, q.y)).collect();
        tab.row(vec![label.into(), num(*len), path.segments().to_string(), pts.join(";")]);
    }
    match fmt {
        Format::Csv => {
            tab.print();
            output::line("");
            output::line("max_length,count,log2_bound,bound_pass");
            output::line(&format!(
                "{},{},{},{}",
                r,
                count,
                log2_bound.map(num).unwrap_or_default(),
                pass.map(|b| b.to_string()).unwrap_or_else(|| "n/a".into())
            ));
        }
        Format::Json => output::emit_value(
            &json!({"paths": tab.to_json(), "count": count, "log2_bound": log2_bound, "bound_pass": pass, "area": p.area()}),
            fmt,
        ),
    }
    if pass == Some(false) {
        return Err(Failure::verification("count exceeds the exponential bound"));
    }
    Ok(())
}

fn need(v: Option<f64>, name: &str) -> Result<f64, Failure> {
    v.ok_or_else(|| Failure::usage(format!("this family needs --{name}")))
}

fn cmd_example(g: &Global, a: &ExampleArgs, fmt: Format) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let (surface_body, descriptor) = match a.family {
        Family::RandomPolygon => {
            if a.n < 3 {
                return Err(Failure::usage("a polygon needs at least 3 vertices"));
            }
            let p: Polygon = random_convex_polygon(&mut rng, a.n);
            let d = double_polygon(&p)?;
            let desc = json!({"family": "random-polygon", "seed": g.seed, "polygon": serde_json::from_str::<Value>(&polygon_json(&p)).unwrap()});
            (serde_json::to_value(SurfaceFile::from_complex(&d.surface)).unwrap(), desc)
        }
        Family::RandomInfinite => {
            if a.n < 3 {
                return Err(Failure::usage("need at least 3 conical points"));
            }
            let x = random_infinite_sphere(&mut rng, a.n, 0.1);
            let desc = json!({"family": "random-infinite", "seed": g.seed, "curvatures": x.curvatures(), "gap": x.gap()});
            (serde_json::to_value(InfiniteFile::from_sphere(&x)).unwrap(), desc)
        }
        fam => {
            let family = match fam {
                Family::FagnanoCut => ExampleFamily::FagnanoCut { t: need(a.t, "t")? },
                Family::B2Witness => ExampleFamily::B2Witness { x: need(a.x, "x")? },
                Family::C2Witness => ExampleFamily::C2Witness { t: need(a.t, "t")? },
                Family::DeltaWitness => ExampleFamily::DeltaWitness {
                    theta: need(a.theta, "theta")?,
                    m: a.m.ok_or_else(|| Failure::usage("this family needs --m"))?,
                },
                _ => unreachable!(),
            };
            let ex = build_example(family).map_err(Failure::usage)?;
            let desc = json!({"family": ex.family, "trajectory": ex.trajectory, "expected": ex.expected});
            (serde_json::to_value(SurfaceFile::from_complex(&ex.surface)).unwrap(), desc)
        }
    };
    match &a.out {
        Some(path) => {
            let body = serde_json::to_string_pretty(&surface_body).unwrap();
            std::fs::write(path, body).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            output::emit_value(&descriptor, fmt);
        }
        None => {
            // One object that also reads back as a surface file.
            let mut merged = surface_body;
            if let (Value::Object(m), Value::Object(d)) = (&mut merged, descriptor) {
                m.extend(d);
            }
            output::emit_value(&merged, fmt);
        }
    }
    Ok(())
}

//! Key tables for each experiment kind, validation and `describe`.

use std::fmt;

use toml::{Table, Value};

pub const KINDS: [&str; 10] = [
    "decay_profile",
    "ils_sweep",
    "ct_scaling",
    "workhorse",
    "weak_l1",
    "gronwall",
    "dynloc",
    "sli",
    "bracketing",
    "geometry_audit",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ty {
    Int,
    Float,
    Str,
    Bool,
    Floats,
    Ints,
    Table,
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ty::Int => "integer",
            Ty::Float => "float",
            Ty::Str => "string",
            Ty::Bool => "bool",
            Ty::Floats => "[float]",
            Ty::Ints => "[integer]",
            Ty::Table => "table",
        })
    }
}

/// Admissible values. Applied elementwise to lists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Range {
    Any,
    Open(f64, f64),
    Closed(f64, f64),
    /// `(lo, hi]`
    LeftOpen(f64, f64),
    AtLeast(f64),
    Above(f64),
    Below(f64),
    OneOf(&'static [&'static str]),
}

impl Range {
    fn admits(&self, x: f64) -> bool {
        match *self {
            Range::Any | Range::OneOf(_) => x.is_finite(),
            Range::Open(a, b) => a < x && x < b,
            Range::Closed(a, b) => a <= x && x <= b,
            Range::LeftOpen(a, b) => a < x && x <= b,
            Range::AtLeast(a) => x >= a,
            Range::Above(a) => x > a,
            Range::Below(b) => x < b,
        }
    }

    fn render(&self, name: &str) -> Option<String> {
        Some(match *self {
            Range::Any => return None,
            Range::Open(a, b) => format!("{name} ∈ ({a}, {b})"),
            Range::Closed(a, b) => format!("{name} ∈ [{a}, {}]", fmt_bound(b)),
            Range::LeftOpen(a, b) => format!("{name} ∈ ({a}, {b}]"),
            Range::AtLeast(a) => format!("{name} ≥ {a}"),
            Range::Above(a) => format!("{name} > {a}"),
            Range::Below(b) => format!("{name} < {b}"),
            Range::OneOf(v) => format!("{name} ∈ {{{}}}", v.join(", ")),
        })
    }
}

fn fmt_bound(b: f64) -> String {
    if (b - 1.0 / 3.0).abs() < 1e-15 {
        "1/3".into()
    } else {
        b.to_string()
    }
}

#[derive(Debug, Clone)]
pub struct Key {
    pub path: &'static str,
    pub ty: Ty,
    pub range: Range,
    pub required: bool,
    /// TOML literal used when the key is absent.
    pub default: Option<&'static str>,
    pub about: &'static str,
}

fn req(path: &'static str, ty: Ty, range: Range, about: &'static str) -> Key {
    Key {
        path,
        ty,
        range,
        required: true,
        default: None,
        about,
    }
}

fn opt(path: &'static str, ty: Ty, range: Range, default: &'static str, about: &'static str) -> Key {
    Key {
        path,
        ty,
        range,
        required: false,
        default: Some(default),
        about,
    }
}

fn maybe(path: &'static str, ty: Ty, range: Range, about: &'static str) -> Key {
    Key {
        path,
        ty,
        range,
        required: false,
        default: None,
        about,
    }
}

impl Key {
    pub fn name(&self) -> &'static str {
        self.path.rsplit('.').next().unwrap_or(self.path)
    }

    pub fn annotation(&self) -> String {
        match self.range.render(self.name()) {
            Some(r) => format!("{}, {r}", self.about),
            None => self.about.to_string(),
        }
    }
}

fn common() -> Vec<Key> {
    vec![
        req("kind", Ty::Str, Range::OneOf(&KINDS), "experiment kind"),
        req("seed", Ty::Int, Range::AtLeast(0.0), "master seed of the seed tree"),
        maybe("out", Ty::Str, Range::Any, "output directory, overridden by --out"),
    ]
}

fn lattice_keys(side_required: bool) -> Vec<Key> {
    let mut v = vec![
        req("model.dim", Ty::Int, Range::Closed(1.0, 3.0), "lattice dimension d"),
        opt("model.h", Ty::Float, Range::LeftOpen(0.0, 1.0), "1.0", "grid spacing"),
    ];
    if side_required {
        v.push(req("model.side", Ty::Float, Range::Above(0.0), "side of the cubic domain (strip length if width is set)"));
    }
    v.push(maybe(
        "model.width",
        Ty::Float,
        Range::Above(0.0),
        "transverse width; turns the domain into a strip with one longitudinal axis",
    ));
    v
}

fn impurity_keys() -> Vec<Key> {
    vec![
        opt(
            "model.layout",
            Ty::Str,
            Range::OneOf(&["alloy", "surface", "displacement"]),
            "\"alloy\"",
            "impurity configuration: integer lattice, surface layer, or displaced lattice",
        ),
        opt(
            "model.displacement",
            Ty::Float,
            Range::Closed(0.0, 1.0 / 3.0),
            "0.0",
            "maximal max-norm displacement of lattice impurities (displacement layout)",
        ),
        opt(
            "model.surface_dim",
            Ty::Int,
            Range::Closed(1.0, 2.0),
            "1",
            "number of longitudinal axes d1 of the surface layer, d1 < d",
        ),
        opt(
            "model.surface_density",
            Ty::Float,
            Range::Above(0.0),
            "1.0",
            "surface impurities per unit d1-volume, at most (1/r_min)^d1",
        ),
        opt("model.r_perp", Ty::Float, Range::Above(0.0), "1.0", "transverse thickness of the surface layer"),
        opt(
            "model.r_min",
            Ty::Float,
            Range::Above(0.0),
            "1.0",
            "uniform discreteness: minimal impurity separation",
        ),
        opt(
            "model.jitter",
            Ty::Float,
            Range::AtLeast(0.0),
            "0.0",
            "max-norm jitter of surface impurities, at most r_perp/2",
        ),
    ]
}

fn ensemble_keys(side_required: bool, with_boundary: bool) -> Vec<Key> {
    let mut v = lattice_keys(side_required);
    if with_boundary {
        v.push(opt(
            "model.boundary",
            Ty::Str,
            Range::OneOf(&["dirichlet", "neumann", "robin"]),
            "\"dirichlet\"",
            "boundary condition on the domain",
        ));
        v.push(opt(
            "model.robin_sigma",
            Ty::Float,
            Range::AtLeast(0.0),
            "0.0",
            "Robin coefficient on exterior faces (robin boundary)",
        ));
    }
    v.push(opt("model.background", Ty::Float, Range::Any, "0.0", "constant background potential V0, the bottom of the unperturbed spectrum"));
    v.extend(impurity_keys());
    v.push(req(
        "model.profile",
        Ty::Table,
        Range::Any,
        "single-site potential: {shape = \"box\", height, side} or {shape = \"bump\", c_min, c_max, r_inner, r_outer}",
    ));
    v.push(req(
        "model.law",
        Ty::Table,
        Range::Any,
        "coupling law on [0, eta_max]: uniform, scaled_beta, piecewise_uniform, narrow or degenerate",
    ));
    v.push(opt(
        "output.realizations",
        Ty::Int,
        Range::AtLeast(0.0),
        "0",
        "number of leading realizations dumped to realizations.json",
    ));
    v
}

/// Key table for `kind`, or `None` for an unknown kind.
pub fn keys(kind: &str) -> Option<Vec<Key>> {
    let mut v = common();
    let s_key = || req("numeric.s", Ty::Float, Range::Open(0.0, 1.0), "fractional power of the resolvent block norm");
    let samples = |min: f64| req("numeric.samples", Ty::Int, Range::AtLeast(min), "Monte Carlo sample count N");
    match kind {
        "decay_profile" => {
            v.extend(ensemble_keys(true, true));
            v.extend([
                s_key(),
                req(
                    "numeric.delta",
                    Ty::Float,
                    Range::Above(0.0),
                    "width of the energy window [E0, E0 + delta] above the fluctuation edge; must stay below E_F - E0",
                ),
                opt("numeric.energy_points", Ty::Int, Range::AtLeast(1.0), "5", "energies in the window grid"),
                opt("numeric.eps", Ty::Floats, Range::Above(0.0), "[1e-6]", "imaginary parts of the spectral parameter"),
                req("numeric.separations", Ty::Floats, Range::Above(0.0), "separations |x - y| along the first axis, at least four"),
                samples(100.0),
                maybe("numeric.x", Ty::Floats, Range::Any, "base point; defaults to leave room for the largest separation"),
                maybe("numeric.cap", Ty::Float, Range::Above(0.0), "a priori bound checked against every grid moment"),
                opt(
                    "numeric.free_comparison",
                    Ty::Bool,
                    Range::Any,
                    "true",
                    "rerun the pipeline on the fully covered operator and compare with its Combes-Thomas rate",
                ),
            ]);
        }
        "ils_sweep" => {
            v.extend(ensemble_keys(false, false));
            v.extend([
                req("numeric.lengths", Ty::Floats, Range::Above(0.0), "Neumann box lengths L, at least two"),
                req(
                    "numeric.m",
                    Ty::Float,
                    Range::Open(0.0, 2.0),
                    "initial length scale exponent: the event is E1 <= E0 + L^-m",
                ),
                samples(1.0),
                maybe(
                    "numeric.strip_width",
                    Ty::Float,
                    Range::Above(0.0),
                    "transverse width W for d >= 2; strips of width W and 2W are both run",
                ),
            ]);
        }
        "ct_scaling" => {
            v.extend(lattice_keys(true));
            v.extend([
                opt("numeric.energy", Ty::Float, Range::Below(0.0), "-1.0", "energy below the free spectrum (its edge is 0)"),
                opt(
                    "numeric.gaps",
                    Ty::Floats,
                    Range::Above(0.0),
                    "[0.01, 0.04, 0.16]",
                    "distances below the finite-volume spectral edge for the root-gap sweep",
                ),
                req("numeric.separations", Ty::Floats, Range::Above(0.0), "separations for the fixed-energy fit, at least four"),
                maybe("numeric.gap_separations", Ty::Floats, Range::Above(0.0), "separations for the gap sweep; default: numeric.separations"),
                opt("numeric.eps", Ty::Float, Range::Above(0.0), "1e-6", "imaginary part of the spectral parameter"),
            ]);
        }
        "workhorse" => v.extend([
            s_key(),
            req("numeric.instances", Ty::Int, Range::AtLeast(1.0), "number of instances of the family"),
            opt(
                "numeric.family",
                Ty::Str,
                Range::OneOf(&["random", "scalar"]),
                "\"random\"",
                "instance family: random n x n, or the 1x1 case with S = 0",
            ),
            opt("numeric.n", Ty::Int, Range::AtLeast(1.0), "16", "matrix size of the random family"),
            opt("numeric.eps", Ty::Float, Range::Above(0.0), "0.05", "dissipation: Im A = eps"),
            opt("numeric.energy", Ty::Float, Range::Any, "1.0", "energy of the scalar instance"),
            opt("numeric.rel_tol", Ty::Float, Range::Open(0.0, 1.0), "1e-5", "relative quadrature tolerance"),
        ]),
        "weak_l1" => v.extend([
            req("numeric.thresholds", Ty::Floats, Range::Above(0.0), "increasing threshold grid t, at least two"),
            samples(1.0),
            opt(
                "numeric.family",
                Ty::Str,
                Range::OneOf(&["random", "scalar"]),
                "\"random\"",
                "instance family: random n x n, or the 1x1 case with S = 0",
            ),
            opt("numeric.instances", Ty::Int, Range::AtLeast(1.0), "5", "number of random instances"),
            opt("numeric.n", Ty::Int, Range::AtLeast(1.0), "16", "matrix size of the random family"),
            opt("numeric.eps", Ty::Float, Range::Above(0.0), "0.05", "dissipation: Im A = eps"),
            opt("numeric.energy", Ty::Float, Range::Any, "0.0", "energy of the scalar instance"),
        ]),
        "gronwall" => v.extend([
            opt("numeric.dim", Ty::Int, Range::Closed(1.0, 3.0), "1", "lattice dimension d"),
            req("numeric.scale", Ty::Float, Range::Above(0.0), "length scale L"),
            maybe("numeric.rate", Ty::Float, Range::Above(0.0), "kernel rate c, decay e^{-(c/L)|x - x'|}; required unless tau_fit is set"),
            maybe(
                "numeric.tau_fit",
                Ty::Str,
                Range::Any,
                "fit.json of a decay_profile run; its fitted rate times L becomes the kernel rate",
            ),
            req("numeric.kappa", Ty::Float, Range::Any, "prefactor exponent: the kernel carries L^(-2d-kappa)"),
            req("numeric.radius", Ty::Int, Range::AtLeast(4.0), "window radius T"),
            opt("numeric.source", Ty::Str, Range::OneOf(&["point", "decaying"]), "\"decaying\"", "source b of the recursion"),
            maybe("numeric.source_rate", Ty::Float, Range::Above(0.0), "decay rate of the decaying source; default twice the kernel rate c/L, must exceed it"),
            maybe("numeric.mu_sweep", Ty::Floats, Range::Above(0.0), "rates of unit kernels for the norm scaling sweep"),
            opt("numeric.sweep_radius", Ty::Int, Range::AtLeast(4.0), "420", "window radius of the sweep"),
            opt("numeric.max_iterations", Ty::Int, Range::AtLeast(1.0), "1000", "iteration cap of the Neumann series"),
        ]),
        "dynloc" => {
            v.extend(ensemble_keys(true, true));
            v.extend([
                req("numeric.window", Ty::Floats, Range::Any, "energy interval [lo, hi] of the spectral projection"),
                req("numeric.separations", Ty::Floats, Range::Above(0.0), "separations along the first axis, at least four"),
                maybe("numeric.x", Ty::Floats, Range::Any, "base point; defaults to leave room for the largest separation"),
                samples(1.0),
                req("numeric.t_max", Ty::Float, Range::Above(0.0), "end of the time grid"),
                opt("numeric.time_points", Ty::Int, Range::AtLeast(2.0), "200", "points of the uniform time grid [0, t_max)"),
                opt(
                    "numeric.min_periods",
                    Ty::Float,
                    Range::AtLeast(0.0),
                    "2.0",
                    "t_max must cover this many inverse mean level spacings",
                ),
                opt(
                    "numeric.compare_free",
                    Ty::Bool,
                    Range::Any,
                    "true",
                    "also run the coupling-free ensemble as the paired control",
                ),
            ]);
        }
        "sli" => {
            v.extend(ensemble_keys(true, true));
            v.extend([
                req("numeric.length", Ty::Float, Range::Above(2.0), "side of the inner box around x"),
                req("numeric.x", Ty::Floats, Range::Any, "inner point"),
                req("numeric.y", Ty::Floats, Range::Any, "outer point, beyond the outer shell"),
                req("numeric.energy", Ty::Float, Range::Any, "real part of the spectral parameter"),
                opt("numeric.eps", Ty::Float, Range::Above(0.0), "1e-6", "imaginary part of the spectral parameter"),
                samples(1.0),
                maybe("numeric.bound", Ty::Float, Range::Above(0.0), "declared bound on the factorization ratio"),
            ]);
        }
        "bracketing" => {
            v.extend(ensemble_keys(true, false));
            v.extend([
                req("numeric.pieces", Ty::Int, Range::AtLeast(1.0), "number of equal sub-strips of the partition"),
                req("numeric.realizations", Ty::Int, Range::AtLeast(1.0), "disorder realizations checked"),
                opt(
                    "numeric.derivative_steps",
                    Ty::Floats,
                    Range::Above(0.0),
                    "[1e-3, 5e-4]",
                    "central-difference steps of the ground energy derivative",
                ),
                opt(
                    "numeric.derivative_realizations",
                    Ty::Int,
                    Range::AtLeast(0.0),
                    "5",
                    "realizations used for the derivative identity",
                ),
                opt(
                    "numeric.deviation_counts",
                    Ty::Ints,
                    Range::AtLeast(1.0),
                    "[10, 20, 40]",
                    "numbers of couplings averaged in the large-deviation probe",
                ),
                opt(
                    "numeric.deviation_fraction",
                    Ty::Float,
                    Range::Open(0.0, 1.0),
                    "0.5",
                    "threshold of the probe as a fraction of the mean coupling",
                ),
                opt("numeric.deviation_samples", Ty::Int, Range::AtLeast(1.0), "100000", "samples per count in the probe"),
            ]);
        }
        "geometry_audit" => {
            v.extend(lattice_keys(true));
            v.extend(impurity_keys());
            v.extend([
                req("numeric.lengths", Ty::Floats, Range::Above(0.0), "window lengths of the counting probe"),
                opt("numeric.shifts", Ty::Int, Range::AtLeast(1.0), "4", "window centre shifts per axis, in steps of 1/4"),
                opt("numeric.dense_scan", Ty::Bool, Range::Any, "true", "scan for the relative denseness radius"),
                maybe("numeric.surface_constant", Ty::Float, Range::Above(0.0), "declared lower count constant for surface windows"),
            ]);
        }
        _ => return None,
    }
    Some(v)
}

/// Human-readable key table for `describe`.
pub fn describe(kind: &str) -> Result<String, String> {
    let keys = keys(kind).ok_or_else(|| format!("unknown experiment kind `{kind}`; valid kinds: {}", KINDS.join(", ")))?;
    let mut out = format!("{kind}\n");
    for k in keys {
        let status = match (k.required, k.default) {
            (true, _) => "required".to_string(),
            (false, Some(d)) => format!("default {d}"),
            (false, None) => "optional".to_string(),
        };
        out.push_str(&format!("  {:<28} {:<10} {:<22} {}\n", k.path, k.ty.to_string(), status, k.annotation()));
    }
    Ok(out)
}

pub fn lookup<'a>(table: &'a Table, path: &str) -> Option<&'a Value> {
    let mut parts = path.split('.');
    let mut cur = table.get(parts.next()?)?;
    for p in parts {
        cur = cur.as_table()?.get(p)?;
    }
    Some(cur)
}

pub fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn check_value(key: &Key, v: &Value, errors: &mut Vec<String>) {
    let p = key.path;
    let range_msg = || key.range.render(key.name()).unwrap_or_default();
    let bad_number = |x: f64, at: Option<usize>| {
        (!key.range.admits(x)).then(|| {
            let loc = at.map(|i| format!("[{i}]")).unwrap_or_default();
            format!("{p}{loc} = {x}: must satisfy {}", range_msg())
        })
    };
    match key.ty {
        Ty::Int => match v.as_integer() {
            Some(i) => errors.extend(bad_number(i as f64, None)),
            None => errors.push(format!("{p}: expected an integer")),
        },
        Ty::Float => match as_f64(v) {
            Some(x) => errors.extend(bad_number(x, None)),
            None => errors.push(format!("{p}: expected a number")),
        },
        Ty::Bool => {
            if !v.is_bool() {
                errors.push(format!("{p}: expected true or false"));
            }
        }
        Ty::Str => match v.as_str() {
            Some(s) => {
                if let Range::OneOf(opts) = key.range {
                    if !opts.contains(&s) {
                        errors.push(format!("{p} = \"{s}\": must be one of {}", opts.join(", ")));
                    }
                }
            }
            None => errors.push(format!("{p}: expected a string")),
        },
        Ty::Floats | Ty::Ints => match v.as_array() {
            Some(items) if items.is_empty() => errors.push(format!("{p}: list is empty")),
            Some(items) => {
                for (i, item) in items.iter().enumerate() {
                    let x = if key.ty == Ty::Ints { item.as_integer().map(|i| i as f64) } else { as_f64(item) };
                    match x {
                        Some(x) => errors.extend(bad_number(x, Some(i))),
                        None => errors.push(format!("{p}[{i}]: expected {}", if key.ty == Ty::Ints { "an integer" } else { "a number" })),
                    }
                }
            }
            None => errors.push(format!("{p}: expected a list")),
        },
        Ty::Table => {
            if !v.is_table() {
                errors.push(format!("{p}: expected a table"));
            }
        }
    }
}

fn collect_paths(prefix: &str, table: &Table, opaque: &[&str], out: &mut Vec<String>) {
    for (k, v) in table {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) if !opaque.contains(&path.as_str()) => collect_paths(&path, t, opaque, out),
            _ => out.push(path),
        }
    }
}

/// Type, range, presence and unknown-key checks. Returns every problem found.
pub fn validate_keys(table: &Table) -> Result<Vec<Key>, Vec<String>> {
    let kind = match table.get("kind").and_then(Value::as_str) {
        Some(k) => k,
        None => return Err(vec![format!("kind: missing; valid kinds: {}", KINDS.join(", "))]),
    };
    let keys = keys(kind).ok_or_else(|| vec![format!("kind = \"{kind}\": unknown; valid kinds: {}", KINDS.join(", "))])?;
    let mut errors = Vec::new();
    for key in &keys {
        match lookup(table, key.path) {
            Some(v) => check_value(key, v, &mut errors),
            None if key.required => errors.push(format!("{}: missing ({})", key.path, key.annotation())),
            None => {}
        }
    }
    let opaque: Vec<&str> = keys.iter().filter(|k| k.ty == Ty::Table).map(|k| k.path).collect();
    let mut present = Vec::new();
    collect_paths("", table, &opaque, &mut present);
    for p in present {
        if !keys.iter().any(|k| k.path == p) {
            errors.push(format!("{p}: unknown key for kind {kind}"));
        }
    }
    if errors.is_empty() {
        Ok(keys)
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kind_has_a_table() {
        for k in KINDS {
            let keys = keys(k).unwrap();
            assert!(keys.iter().any(|key| key.path == "seed"));
            for key in &keys {
                if let Some(d) = key.default {
                    let t: Table = toml::from_str(&format!("v = {d}")).unwrap();
                    let mut errs = Vec::new();
                    check_value(key, &t["v"], &mut errs);
                    assert!(errs.is_empty(), "{k}: default of {} fails its own check: {errs:?}", key.path);
                }
            }
        }
    }

    #[test]
    fn ranges_render_with_the_key_name() {
        let keys = keys("ils_sweep").unwrap();
        let m = keys.iter().find(|k| k.path == "numeric.m").unwrap();
        assert!(m.annotation().ends_with("m ∈ (0, 2)"), "{}", m.annotation());
    }

    #[test]
    fn lists_are_checked_elementwise() {
        let key = req("numeric.eps", Ty::Floats, Range::Above(0.0), "");
        let t: Table = toml::from_str("v = [1e-3, -1.0, \"x\"]").unwrap();
        let mut errs = Vec::new();
        check_value(&key, &t["v"], &mut errs);
        assert_eq!(errs.len(), 2, "{errs:?}");
        assert!(errs[0].starts_with("numeric.eps[1]"));
    }
}

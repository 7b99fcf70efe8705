use expressivity::activations::{builtin, Activation, ActivationGap, PwlActivation};
use expressivity::approx::{prop2_check, uniform_interpolant_1d};
use expressivity::bounds::{breakpoint_upper_bound, lemma1_check, psi, theorem3_bound, BoundConfig};
use expressivity::netgraph::{random_network, Network, Node, RandomNetSpec, Segment};
use expressivity::pwl::{Piece, PwlFunction1D};
use expressivity::restriction::restrict;
use expressivity::targets::catalog;
use num::rational::Ratio;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn activations() -> Vec<PwlActivation> {
    ["relu", "hard-tanh", "step", "identity", "leaky-relu(0.1)"]
        .iter()
        .map(|n| builtin(n).unwrap().as_pwl().unwrap().clone())
        .collect()
}

/// Expression tree over the segment parameter.
#[derive(Clone, Debug)]
enum Expr {
    Line(f64, f64),
    Combine(Vec<(f64, Expr)>, f64),
    Apply(usize, Box<Expr>),
}

impl Expr {
    fn eval(&self, a: f64, acts: &[PwlActivation]) -> f64 {
        match self {
            Expr::Line(s, c) => s * a + c,
            Expr::Combine(terms, bias) => terms.iter().fold(*bias, |acc, (w, e)| acc + w * e.eval(a, acts)),
            Expr::Apply(k, e) => acts[*k].eval(e.eval(a, acts)),
        }
    }

    fn build(&self, acts: &[PwlActivation]) -> PwlFunction1D {
        match self {
            Expr::Line(s, c) => PwlFunction1D::affine(*s, *c),
            Expr::Combine(terms, bias) => {
                let fs: Vec<PwlFunction1D> = terms.iter().map(|(_, e)| e.build(acts)).collect();
                let refs: Vec<&PwlFunction1D> = fs.iter().collect();
                let ws: Vec<f64> = terms.iter().map(|(w, _)| *w).collect();
                PwlFunction1D::affine_combine(&ws, &refs, *bias).unwrap()
            }
            Expr::Apply(k, e) => e.build(acts).apply_activation(&acts[*k]),
        }
    }
}

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = (-3.0f64..3.0, -2.0f64..2.0).prop_map(|(s, c)| Expr::Line(s, c));
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            (prop::collection::vec((-2.0f64..2.0, inner.clone()), 1..4), -1.0f64..1.0)
                .prop_map(|(t, b)| Expr::Combine(t, b)),
            (0usize..5, inner).prop_map(|(k, e)| Expr::Apply(k, Box::new(e))),
        ]
    })
}

/// Random function from sorted break points and pieces.
fn pwl() -> impl Strategy<Value = PwlFunction1D> {
    prop::collection::vec(0.01f64..0.99, 0..6).prop_flat_map(|mut bps| {
        bps.sort_by(f64::total_cmp);
        bps.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        let k = bps.len() + 1;
        prop::collection::vec((-4.0f64..4.0, -2.0f64..2.0), k).prop_map(move |ps| {
            let pieces = ps.into_iter().map(|(s, c)| Piece::new(s, c)).collect();
            PwlFunction1D::from_parts(bps.clone(), pieces).unwrap()
        })
    })
}

fn net_spec() -> impl Strategy<Value = RandomNetSpec> {
    (1usize..4, 1usize..5, 1usize..6, 0.0f64..0.6, 0usize..3, any::<u64>()).prop_map(|(n, d, w, p, act, seed)| {
        RandomNetSpec {
            n_inputs: n,
            depth: d,
            widths: None,
            max_width: Some(w),
            skip_prob: p,
            weight_range: 1.0,
            activation: ["relu", "hard-tanh", "leaky-relu(0.2)"][act].to_string(),
            seed,
        }
    })
}

fn random_segment(n: usize, seed: u64) -> Segment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = || (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<f64>>();
    Segment::new(p(), p()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn expression_trees_match_pointwise(e in expr()) {
        let acts = activations();
        let f = e.build(&acts);
        for i in 0..1000 {
            let a = (i as f64 + 0.5) / 1000.0;
            let want = e.eval(a, &acts);
            let got = f.eval(a).unwrap();
            prop_assert!((got - want).abs() <= 1e-9 + 1e-9 * want.abs(), "a={a}: {got} vs {want}");
        }
    }

    #[test]
    fn normalize_is_idempotent(f in pwl()) {
        let once = f.normalize();
        prop_assert_eq!(once.normalize(), once);
    }

    #[test]
    fn combine_is_subadditive(fs in prop::collection::vec(pwl(), 1..4), ws in prop::collection::vec(-3.0f64..3.0, 4), bias in -1.0f64..1.0) {
        let refs: Vec<&PwlFunction1D> = fs.iter().collect();
        let g = PwlFunction1D::affine_combine(&ws[..fs.len()], &refs, bias).unwrap();
        let total: usize = fs.iter().map(PwlFunction1D::count_breakpoints).sum();
        prop_assert!(g.count_breakpoints() <= total);
    }

    #[test]
    fn composition_bound(f in pwl(), k in 0usize..5) {
        let sigma = &activations()[k];
        let g = f.apply_activation(sigma);
        prop_assert!(g.count_breakpoints() < sigma.t() * (f.count_breakpoints() + 1));
    }

    #[test]
    fn states_are_monotone_and_bounded(k in 0usize..5, mut vs in prop::collection::vec(-5.0f64..5.0, 2..50)) {
        let sigma = &activations()[k];
        vs.sort_by(f64::total_cmp);
        let states: Vec<usize> = vs.iter().map(|&v| sigma.state_of(v)).collect();
        prop_assert!(states.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(states.iter().all(|&s| (1..=sigma.t()).contains(&s)));
        for &v in &vs {
            let via_pwl = PwlFunction1D::constant(v).apply_activation(sigma).eval(0.5).unwrap();
            prop_assert_eq!(via_pwl, sigma.eval(v));
        }
    }

    #[test]
    fn state_trace_matches_pre_activation(f in pwl(), k in 0usize..5) {
        let sigma = &activations()[k];
        let trace = f.state_trace(sigma);
        prop_assert_eq!(trace.first().map(|s| s.start), Some(0.0));
        prop_assert_eq!(trace.last().map(|s| s.end), Some(1.0));
        for iv in &trace {
            let mid = 0.5 * (iv.start + iv.end);
            prop_assert_eq!(sigma.state_of(f.eval(mid).unwrap()), iv.state);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn edges_increase_depth(spec in net_spec()) {
        let net = random_network(&spec).unwrap();
        let p = net.depth_profile().unwrap();
        for e in net.edges() {
            if let (Node::Hidden(a), Node::Hidden(b)) = (e.from, e.to) {
                prop_assert!(p.unit_depth[a] < p.unit_depth[b]);
            }
        }
        for i in 1..=p.depth {
            prop_assert!(net.in_set_indices(&p.prefix(i)).is_empty());
        }
    }

    #[test]
    fn restriction_agrees_with_forward(spec in net_spec(), seg_seed in any::<u64>()) {
        let net = random_network(&spec).unwrap();
        let seg = random_segment(net.n_inputs(), seg_seed);
        let r = restrict(&net, &seg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seg_seed ^ 0x5eed);
        for _ in 0..64 {
            let a: f64 = rng.gen_range(0.0..=1.0);
            let want = net.forward(&seg.point_at(a)).unwrap().output;
            let got = r.output().eval(a).unwrap();
            prop_assert!((got - want).abs() <= 1e-8 + 1e-8 * want.abs());
        }
    }

    #[test]
    fn sandwich_and_lemmas_hold(spec in net_spec(), seg_seed in any::<u64>()) {
        let net = random_network(&spec).unwrap();
        let r = restrict(&net, &random_segment(net.n_inputs(), seg_seed)).unwrap();
        let s = r.sandwich();
        prop_assert!(s.holds(), "{s:?}");
        for rep in r.lemma_audit() {
            prop_assert!(rep.passed(), "{rep}");
        }
        let p = r.profile();
        let b = breakpoint_upper_bound(r.t(), p.omega, p.depth).unwrap();
        prop_assert_eq!(b.value, s.bound);
        prop_assert!(lemma1_check(r.t(), p.depth, p.hidden_count()).unwrap().passed());
    }

    #[test]
    fn filtered_never_exceeds_raw(spec in net_spec(), seg_seed in any::<u64>()) {
        let net = random_network(&spec).unwrap();
        let r = restrict(&net, &random_segment(net.n_inputs(), seg_seed)).unwrap();
        let p = r.profile();
        for layer in &p.layers {
            let raw: usize = layer.iter().map(|&h| r.raw_transitions(h)).sum();
            prop_assert!(r.transitions_of(layer) <= raw);
        }
    }

    #[test]
    fn json_round_trip(spec in net_spec(), x_seed in any::<u64>()) {
        let net = random_network(&spec).unwrap();
        let text = net.to_json().unwrap();
        let back = Network::from_json(&text).unwrap();
        prop_assert_eq!(back.to_json().unwrap(), text);
        let x = random_segment(net.n_inputs(), x_seed).x;
        prop_assert_eq!(back.forward(&x).unwrap().output, net.forward(&x).unwrap().output);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lemma1_random(t in 1usize..8, h in 1usize..60, frac in 0.0f64..1.0) {
        let d = 1 + ((h - 1) as f64 * frac) as usize;
        prop_assert!(lemma1_check(t, d, h).unwrap().passed());
    }

    #[test]
    fn theorem3_is_monotone(
        gap in 0.0f64..1.0, dg in 0.0f64..1.0,
        a in 0.1f64..2.0, da in 0.0f64..1.0,
        w in 1u64..30, dw in 0u64..5,
        d in 1usize..6, dd in 0usize..3,
    ) {
        let f = |gap: f64, a: f64, w: u64, d: usize| {
            theorem3_bound(0.25, a, Ratio::new(w, 1), d, ActivationGap { value: gap }).unwrap()
        };
        let base = f(gap, a, w, d);
        prop_assert!(f(gap + dg, a, w, d) >= base);
        prop_assert!(f(gap, a + da, w, d) >= base);
        prop_assert!(f(gap, a, w + dw, d) >= base);
        prop_assert!(f(gap, a, w, d + dd) >= base);
    }

    #[test]
    fn psi_refinement_does_not_increase(
        which in 0usize..3,
        x in prop::collection::vec(0.0f64..1.0, 2),
        y in prop::collection::vec(0.0f64..1.0, 2),
        grid in 9usize..200,
    ) {
        prop_assume!(x != y);
        let g = catalog(["poly_a", "poly_g1", "poly_g2"][which], None).unwrap();
        let coarse = BoundConfig { alpha_grid: grid, ..BoundConfig::default() };
        let fine = BoundConfig { alpha_grid: 2 * grid - 1, ..BoundConfig::default() };
        let a = psi(&g, &x, &y, &coarse).unwrap().psi;
        let b = psi(&g, &x, &y, &fine).unwrap().psi;
        prop_assert!(b <= a + 1e-6, "{a} -> {b}");
    }

    #[test]
    fn prop2_never_fails(
        which in 0usize..4,
        x in prop::collection::vec(0.0f64..1.0, 2),
        y in prop::collection::vec(0.0f64..1.0, 2),
        s in 1usize..24,
    ) {
        prop_assume!(x != y);
        let g = catalog(["poly_a", "poly_g1", "poly_g2", "sq_norm"][which], None).unwrap();
        let seg = Segment::new(x, y).unwrap();
        let (f, eps) = uniform_interpolant_1d(&g, &seg, s).unwrap();
        prop_assume!(eps > 1e-12);
        let rep = prop2_check(&g, &seg, &f, eps).unwrap();
        prop_assert!(rep.passed(), "{rep}");
    }

    #[test]
    fn activation_swap_on_random_relu_nets(spec in net_spec(), seed in any::<u64>()) {
        let net = random_network(&spec).unwrap();
        let s1: Activation = builtin("relu").unwrap();
        let s2 = builtin("leaky-relu(0.05)").unwrap();
        let audit = expressivity::approx::swap_audit(
            &net, &s1, &s2, 1.0,
            expressivity::approx::Sampler::MonteCarlo { samples: 500, seed },
        ).unwrap();
        prop_assert!(audit.margin >= 0.0, "{audit:?}");
    }
}

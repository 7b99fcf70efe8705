//! Restriction of a piecewise-linear network to a segment.
//!
//! Every hidden unit's pre-activation and output become exact
//! [`PwlFunction1D`]s of the segment parameter. From those we read off the
//! break points of the network output and the state transitions of any set of
//! hidden units, and audit the transition inequalities that chain together
//! into the break-point upper bound.

use std::collections::BTreeMap;

use crate::bounds::breakpoint_upper_bound;
use crate::error::{arg, Error, Result};
use crate::netgraph::{DepthProfile, Network, Node, Segment};
use crate::pwl::{PwlFunction1D, StateTrace};
use crate::report::AuditReport;

/// State changes closer than this along the segment are simultaneous.
pub const COINCIDENCE_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct LineRestriction<'a> {
    net: &'a Network,
    segment: Segment,
    profile: DepthProfile,
    pre_activation: Vec<PwlFunction1D>,
    unit_output: Vec<PwlFunction1D>,
    output: PwlFunction1D,
    state_traces: Vec<StateTrace>,
}

/// Per-unit raw state-change counts and filtered transition counts of
/// labelled unit sets.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TransitionCount {
    pub raw: BTreeMap<String, usize>,
    pub filtered: BTreeMap<String, usize>,
}

/// Propagates the segment through the network in topological order.
pub fn restrict<'a>(net: &'a Network, segment: &Segment) -> Result<LineRestriction<'a>> {
    let profile = net.depth_profile()?;
    if segment.dim() != net.n_inputs() {
        return Err(arg(format!(
            "segment has dimension {}, network expects {}",
            segment.dim(),
            net.n_inputs()
        )));
    }
    if segment.is_degenerate() {
        return Err(arg("degenerate segment: x == y"));
    }
    let sigmas = net
        .units()
        .iter()
        .map(|u| {
            u.activation.as_pwl().ok_or_else(|| Error::UnsupportedActivation {
                unit: u.id.clone(),
                name: u.activation.name(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let inputs: Vec<PwlFunction1D> = segment
        .x
        .iter()
        .zip(&segment.y)
        .map(|(x, y)| PwlFunction1D::affine(y - x, *x))
        .collect();

    let n = net.units().len();
    let mut pre = vec![PwlFunction1D::constant(0.0); n];
    let mut out = vec![PwlFunction1D::constant(0.0); n];
    let mut traces = vec![StateTrace::new(); n];
    let order = net.topological_order().expect("validated network is acyclic");

    let combine = |fan_in: &[(Node, f64)], bias: f64, out: &[PwlFunction1D]| -> Result<PwlFunction1D> {
        if fan_in.is_empty() {
            return Ok(PwlFunction1D::constant(bias));
        }
        let (coeffs, fs): (Vec<f64>, Vec<&PwlFunction1D>) = fan_in
            .iter()
            .map(|&(src, w)| {
                let f = match src {
                    Node::Input(i) => &inputs[i],
                    Node::Hidden(h) => &out[h],
                    Node::Output => unreachable!("validated network has no edges from the output"),
                };
                (w, f)
            })
            .unzip();
        PwlFunction1D::affine_combine(&coeffs, &fs, bias)
    };

    for &h in order {
        let z = combine(net.fan_in(h), net.units()[h].bias, &out)?;
        traces[h] = z.state_trace(sigmas[h]);
        out[h] = z.apply_activation(sigmas[h]);
        pre[h] = z;
    }
    let output = combine(net.output_fan_in(), net.output_bias(), &out)?;

    Ok(LineRestriction {
        net,
        segment: segment.clone(),
        profile,
        pre_activation: pre,
        unit_output: out,
        output,
        state_traces: traces,
    })
}

impl<'a> LineRestriction<'a> {
    pub fn network(&self) -> &'a Network {
        self.net
    }

    pub fn segment(&self) -> &Segment {
        &self.segment
    }

    pub fn profile(&self) -> &DepthProfile {
        &self.profile
    }

    pub fn output(&self) -> &PwlFunction1D {
        &self.output
    }

    pub fn pre_activations(&self) -> &[PwlFunction1D] {
        &self.pre_activation
    }

    pub fn unit_outputs(&self) -> &[PwlFunction1D] {
        &self.unit_output
    }

    pub fn state_traces(&self) -> &[StateTrace] {
        &self.state_traces
    }

    fn unit(&self, id: &str) -> Result<usize> {
        self.net
            .unit_index(id)
            .ok_or_else(|| arg(format!("unknown hidden unit `{id}`")))
    }

    pub fn pre_activation(&self, id: &str) -> Result<&PwlFunction1D> {
        Ok(&self.pre_activation[self.unit(id)?])
    }

    pub fn unit_output(&self, id: &str) -> Result<&PwlFunction1D> {
        Ok(&self.unit_output[self.unit(id)?])
    }

    pub fn state_trace(&self, id: &str) -> Result<&StateTrace> {
        Ok(&self.state_traces[self.unit(id)?])
    }

    /// Break points of the output on the open segment.
    pub fn break_points(&self) -> usize {
        self.output.count_breakpoints()
    }

    /// Points in `(0, 1)` where unit `h` changes state.
    pub fn events(&self, h: usize) -> impl Iterator<Item = f64> + '_ {
        self.state_traces[h].iter().skip(1).map(|s| s.start)
    }

    /// Number of state changes of unit `h` on the open segment.
    pub fn raw_transitions(&self, h: usize) -> usize {
        self.state_traces[h].len() - 1
    }

    /// Transitions of the unit set `set`: state changes of `set` at points
    /// where no unit of its intermediate set changes state.
    pub fn transitions_of(&self, set: &[usize]) -> usize {
        let inter = self.net.in_set_indices(set);
        let mut events: Vec<(f64, bool)> = set
            .iter()
            .flat_map(|&h| self.events(h).map(|a| (a, true)))
            .chain(inter.iter().flat_map(|&h| self.events(h).map(|a| (a, false))))
            .collect();
        events.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut count = 0;
        let mut i = 0;
        while i < events.len() {
            let (mut own, mut blocked) = (false, false);
            let mut last = events[i].0;
            while i < events.len() && events[i].0 - last <= COINCIDENCE_TOL {
                last = events[i].0;
                if events[i].1 {
                    own = true;
                } else {
                    blocked = true;
                }
                i += 1;
            }
            if own && !blocked {
                count += 1;
            }
        }
        count
    }

    pub fn transitions(&self, ids: &[&str]) -> Result<usize> {
        let set = self.net.resolve_units(ids)?;
        Ok(self.transitions_of(&set))
    }

    /// Raw per-unit counts plus filtered counts for each labelled set.
    pub fn transition_count(&self, sets: &[(&str, &[&str])]) -> Result<TransitionCount> {
        let raw = self
            .net
            .units()
            .iter()
            .enumerate()
            .map(|(h, u)| (u.id.clone(), self.raw_transitions(h)))
            .collect();
        let filtered = sets
            .iter()
            .map(|(label, ids)| Ok((label.to_string(), self.transitions(ids)?)))
            .collect::<Result<_>>()?;
        Ok(TransitionCount { raw, filtered })
    }

    /// `N(H_f)`: state-vector changes of the whole hidden set.
    pub fn total_transitions(&self) -> usize {
        let all: Vec<usize> = (0..self.net.units().len()).collect();
        self.transitions_of(&all)
    }

    /// Largest activation piece count in the network.
    pub fn t(&self) -> usize {
        self.net.max_pieces().expect("restricted network is piecewise linear")
    }

    /// `B <= N(H_f) <= ((t-1) w + 1)^d - 1` on this instance.
    pub fn sandwich(&self) -> Sandwich {
        let bound = breakpoint_upper_bound(self.t(), self.profile.omega, self.profile.depth)
            .expect("valid depth profile");
        Sandwich {
            break_points: self.break_points(),
            transitions: self.total_transitions(),
            bound: bound.value,
        }
    }

    /// Checks each transition lemma on every instance the layer structure
    /// of this network provides.
    pub fn lemma_audit(&self) -> Vec<AuditReport> {
        let p = &self.profile;
        let d = p.depth;
        let prefixes: Vec<Vec<usize>> = (1..=d).map(|i| p.prefix(i)).collect();
        let n_prefix: Vec<usize> = prefixes.iter().map(|s| self.transitions_of(s)).collect();
        let n_layer: Vec<usize> = p.layers.iter().map(|l| self.transitions_of(l)).collect();
        let n_unit: Vec<usize> = (0..self.net.units().len())
            .map(|h| self.transitions_of(&[h]))
            .collect();
        let mut reports = Vec::new();

        // Subadditivity over (next layer, prefix): the union is the next prefix.
        for i in 1..d {
            reports.push(
                AuditReport::upper(
                    "lemma2",
                    n_prefix[i] as f64,
                    (n_layer[i] + n_prefix[i - 1]) as f64,
                    0.0,
                )
                .param("layer", i + 1),
            );
        }
        // Monotonicity over nested prefixes.
        for i in 1..d {
            reports.push(
                AuditReport::upper("lemma3", n_prefix[i - 1] as f64, n_prefix[i] as f64, 0.0)
                    .param("prefix", i),
            );
        }
        // A layer transitions no more often than its units in total.
        for (i, layer) in p.layers.iter().enumerate() {
            let sum: usize = layer.iter().map(|&h| n_unit[h]).sum();
            reports.push(
                AuditReport::upper("lemma4", n_layer[i] as f64, sum as f64, 0.0).param("layer", i + 1),
            );
        }
        // At most t-1 transitions per unit between transitions of its ancestors.
        for (h, unit) in self.net.units().iter().enumerate() {
            let t = unit.activation.as_pwl().map_or(1, |s| s.t());
            let anc: Vec<usize> = self.net.in_set_indices(&[h]).into_iter().collect();
            let n_anc = self.transitions_of(&anc);
            reports.push(
                AuditReport::upper(
                    "lemma5",
                    n_unit[h] as f64,
                    ((t - 1) * (n_anc + 1)) as f64,
                    0.0,
                )
                .param("unit", unit.id.clone()),
            );
        }
        // Break points need a state change somewhere.
        let total = n_prefix.last().copied().unwrap_or(0);
        reports.push(AuditReport::upper("lemma6", self.break_points() as f64, total as f64, 0.0));
        reports
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sandwich {
    pub break_points: usize,
    pub transitions: usize,
    pub bound: f64,
}

impl Sandwich {
    pub fn holds(&self) -> bool {
        self.break_points <= self.transitions && (self.transitions as f64) <= self.bound
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::PwlActivation;
    use crate::netgraph::NetworkBuilder;

    /// `t(x) = relu(2x) - relu(4x - 2)` composed with itself.
    pub(crate) fn tent_tent() -> Network {
        let r = PwlActivation::relu();
        NetworkBuilder::new(1)
            .unit("a1", 0.0, r.clone())
            .unit("b1", -2.0, r.clone())
            .unit("a2", 0.0, r.clone())
            .unit("b2", -2.0, r.clone())
            .edge("x1", "a1", 2.0)
            .edge("x1", "b1", 4.0)
            .edge("a1", "a2", 2.0)
            .edge("b1", "a2", -2.0)
            .edge("a1", "b2", 4.0)
            .edge("b1", "b2", -4.0)
            .edge("a2", "out", 1.0)
            .edge("b2", "out", -1.0)
            .build()
            .unwrap()
    }

    fn seg1(x: f64, y: f64) -> Segment {
        Segment::new(vec![x], vec![y]).unwrap()
    }

    #[test]
    fn single_relu_unit() {
        let net = NetworkBuilder::new(1)
            .unit("a", -1.0, PwlActivation::relu())
            .edge("x1", "a", 2.0)
            .edge("a", "out", 1.0)
            .build()
            .unwrap();
        let r = restrict(&net, &seg1(0.0, 1.0)).unwrap();
        assert_eq!(r.output().breakpoints(), &[0.5]);
        assert_eq!(r.break_points(), 1);
    }

    #[test]
    fn tent_tent_breakpoints() {
        let net = tent_tent();
        let r = restrict(&net, &seg1(0.0, 1.0)).unwrap();
        assert_eq!(r.output().breakpoints(), &[0.25, 0.5, 0.75]);
        assert_eq!(r.break_points(), 3);
        // Dense-sampling oracle on the forward pass.
        let n = 4000;
        let vals: Vec<f64> = (0..=n)
            .map(|i| net.forward(&[i as f64 / n as f64]).unwrap().output)
            .collect();
        let h = 1.0 / n as f64;
        let slopes: Vec<f64> = vals.windows(2).map(|w| (w[1] - w[0]) / h).collect();
        let kinks = slopes.windows(2).filter(|w| (w[1] - w[0]).abs() > 1e-6).count();
        assert_eq!(kinks, 3);
        assert!((r.output().eval(0.25).unwrap() - 1.0).abs() < 1e-12);
        assert!((net.forward(&[0.25]).unwrap().output - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tent_tent_sandwich_and_lemmas() {
        let net = tent_tent();
        let r = restrict(&net, &seg1(0.0, 1.0)).unwrap();
        let s = r.sandwich();
        assert_eq!(s.break_points, 3);
        assert!(s.transitions >= 3);
        assert_eq!(s.bound, 8.0);
        assert!(s.holds());
        let reports = r.lemma_audit();
        assert!(reports.iter().all(|x| x.passed()), "{reports:#?}");
        let l6 = reports.iter().find(|x| x.kind == "lemma6").unwrap();
        assert_eq!(l6.measured, 3.0);
    }

    #[test]
    fn affine_network_is_quiet() {
        let id = PwlActivation::identity();
        let net = NetworkBuilder::new(2)
            .unit("a", 0.3, id.clone())
            .unit("b", -0.1, id)
            .edge("x1", "a", 1.5)
            .edge("x2", "a", -0.5)
            .edge("a", "b", 2.0)
            .edge("b", "out", 1.0)
            .edge("a", "out", 1.0)
            .build()
            .unwrap();
        let r = restrict(&net, &Segment::new(vec![-1.0, 2.0], vec![3.0, -1.0]).unwrap()).unwrap();
        assert_eq!(r.break_points(), 0);
        assert_eq!(r.total_transitions(), 0);
        for rep in r.lemma_audit() {
            assert!(rep.passed());
            assert_eq!(rep.measured, 0.0);
        }
    }

    #[test]
    fn stays_in_one_region() {
        // Pre-activations stay positive along the whole segment.
        let net = tent_tent();
        let r = restrict(&net, &seg1(0.1, 0.2)).unwrap();
        assert_eq!(r.break_points(), 0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let net = tent_tent();
        assert!(restrict(&net, &seg1(0.5, 0.5)).is_err());
        assert!(restrict(&net, &Segment::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()).is_err());
        let sig = NetworkBuilder::new(1)
            .unit("s", 0.0, crate::activations::LipschitzActivation::sigmoid())
            .edge("x1", "s", 1.0)
            .edge("s", "out", 1.0)
            .build()
            .unwrap();
        assert!(matches!(
            restrict(&sig, &seg1(0.0, 1.0)),
            Err(Error::UnsupportedActivation { .. })
        ));
    }

    /// Two first-layer units feeding three second-layer units. The first
    /// layer switches at `a1` and `a2`; the second layer switches only there.
    fn two_layer(a1: f64, a2: f64) -> Network {
        let r = PwlActivation::relu();
        // u11 = relu(x - a1) switches at a1, u12 = relu(x - a2) at a2.
        // Second-layer steps read the negated relu outputs, so each flips
        // exactly where its source unit does.
        NetworkBuilder::new(1)
            .unit("u11", -a1, r.clone())
            .unit("u12", -a2, r.clone())
            .unit("u21", 0.0, PwlActivation::step())
            .unit("u22", 0.0, PwlActivation::step())
            .unit("u23", 0.0, PwlActivation::step())
            .edge("x1", "u11", 1.0)
            .edge("x1", "u12", 1.0)
            .edge("u11", "u21", -1.0)
            .edge("u12", "u22", -1.0)
            .edge("u11", "u23", -1.0)
            .edge("u21", "out", 1.0)
            .edge("u22", "out", 1.0)
            .edge("u23", "out", 1.0)
            .build()
            .unwrap()
    }

    #[test]
    fn transitions_distinct_and_coincident() {
        let net = two_layer(0.3, 0.6);
        let r = restrict(&net, &seg1(0.0, 1.0)).unwrap();
        assert_eq!(r.transitions(&["u11"]).unwrap(), 1);
        assert_eq!(r.transitions(&["u12"]).unwrap(), 1);
        assert_eq!(r.transitions(&["u11", "u12"]).unwrap(), 2);

        let net = two_layer(0.4, 0.4);
        let r = restrict(&net, &seg1(0.0, 1.0)).unwrap();
        assert_eq!(r.transitions(&["u11", "u12"]).unwrap(), 1);
    }

    #[test]
    fn downstream_transitions_are_masked() {
        let net = two_layer(0.3, 0.6);
        let r = restrict(&net, &seg1(0.0, 1.0)).unwrap();
        for id in ["u21", "u22", "u23"] {
            assert_eq!(r.raw_transitions(net.unit_index(id).unwrap()), 1, "{id}");
        }
        assert_eq!(r.transitions(&["u21", "u22", "u23"]).unwrap(), 0);
        let tc = r
            .transition_count(&[("U", &["u11", "u12"]), ("U'", &["u21", "u22", "u23"])])
            .unwrap();
        assert_eq!(tc.filtered["U"], 2);
        assert_eq!(tc.filtered["U'"], 0);
        assert_eq!(tc.raw["u21"], 1);
    }

    #[test]
    fn state_traces_match_pre_activation_states() {
        let net = tent_tent();
        let r = restrict(&net, &seg1(0.0, 1.0)).unwrap();
        for (h, unit) in net.units().iter().enumerate() {
            let sigma = unit.activation.as_pwl().unwrap();
            for iv in &r.state_traces()[h] {
                let mid = 0.5 * (iv.start + iv.end);
                let z = r.pre_activations()[h].eval(mid).unwrap();
                assert_eq!(sigma.state_of(z), iv.state);
            }
        }
    }
}

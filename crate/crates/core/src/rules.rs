//! Compilation of rules into stacked tensor layers.
//!
//! Rules are bucketed by their first involved machine, condensed into
//! multi-channel groups, and each group becomes one layer: a row of site
//! tensors joined by horizontal channel indices. Channel 0 carries "no
//! signal"; channel `c >= 1` carries "rule `c` of the group is still alive".
//! Controls emit a channel when their machine matches the rule's condition,
//! relays pass it on or drop it to 0, and the projector at the target
//! machine filters its vertical index when the channel reaches it.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::Rule;
use crate::tensor::{DenseTensor, LayerSite, Network, Plug, SiteColumn, SiteTensor};

/// The five building blocks of a single-rule layer. Projectors take a set of
/// allowed target tasks and the weight of their pass entries.
#[derive(Debug, Clone, PartialEq)]
pub enum PrimitiveKind {
    /// `legs` horizontal indices (1 or 2).
    Id { legs: usize },
    Ctrl { state: usize, channel: usize },
    Cctrl { state: usize, activation: usize, channel: usize },
    CProy { allowed: Vec<usize>, channel: usize, weight: f64 },
    CcProy { allowed: Vec<usize>, channel: usize, weight: f64 },
}

fn check_state(a: usize, vertical: usize) -> Result<()> {
    if a >= vertical {
        return Err(Error::Compile(format!("state {a} out of range {vertical}")));
    }
    Ok(())
}

fn check_channel(b: usize, horizontal: usize) -> Result<()> {
    if b == 0 || b >= horizontal {
        return Err(Error::Compile(format!(
            "channel {b} must lie in 1..{horizontal}"
        )));
    }
    Ok(())
}

fn check_allowed(allowed: &[usize], vertical: usize, weight: f64) -> Result<()> {
    if allowed.is_empty() {
        return Err(Error::Compile("projector with no allowed state".into()));
    }
    for &a in allowed {
        check_state(a, vertical)?;
    }
    if !(weight.is_finite() && weight > 0.0) {
        return Err(Error::Compile(format!("projector weight {weight} must be positive")));
    }
    Ok(())
}

/// Dense form of a primitive. Three-index tensors are `[v_in, v_out, h]`,
/// four-index ones `[v_in, v_out, h_in, h_out]`.
pub fn primitive_tensor(kind: &PrimitiveKind, vertical: usize, horizontal: usize) -> Result<DenseTensor> {
    if vertical == 0 || horizontal == 0 {
        return Err(Error::Compile("extents must be positive".into()));
    }
    let (p, h) = (vertical, horizontal);
    let t = match kind {
        PrimitiveKind::Id { legs } => match legs {
            1 => {
                let mut t = DenseTensor::zeros(vec![p, p, h]);
                for i in 0..p {
                    for j in 0..h {
                        t.set(&[i, i, j], 1.0);
                    }
                }
                t
            }
            2 => {
                let mut t = DenseTensor::zeros(vec![p, p, h, h]);
                for i in 0..p {
                    for j in 0..h {
                        t.set(&[i, i, j, j], 1.0);
                    }
                }
                t
            }
            _ => return Err(Error::Compile(format!("identity with {legs} horizontal legs"))),
        },
        &PrimitiveKind::Ctrl { state, channel } => {
            check_state(state, p)?;
            check_channel(channel, h)?;
            let mut t = DenseTensor::zeros(vec![p, p, h]);
            for j in 0..p {
                t.set(&[j, j, if j == state { channel } else { 0 }], 1.0);
            }
            t
        }
        &PrimitiveKind::Cctrl {
            state,
            activation,
            channel,
        } => {
            check_state(state, p)?;
            check_channel(activation, h)?;
            check_channel(channel, h)?;
            let mut t = DenseTensor::zeros(vec![p, p, h, h]);
            for i in 0..p {
                for k in 0..h {
                    let out = if k == activation && i == state { channel } else { 0 };
                    t.set(&[i, i, k, out], 1.0);
                }
            }
            t
        }
        PrimitiveKind::CProy {
            allowed,
            channel,
            weight,
        } => {
            check_allowed(allowed, p, *weight)?;
            check_channel(*channel, h)?;
            let mut t = DenseTensor::zeros(vec![p, p, h]);
            for i in 0..p {
                for k in 0..h {
                    if k != *channel {
                        t.set(&[i, i, k], 1.0);
                    }
                }
            }
            for &a in allowed {
                t.set(&[a, a, *channel], *weight);
            }
            t
        }
        PrimitiveKind::CcProy {
            allowed,
            channel,
            weight,
        } => {
            check_allowed(allowed, p, *weight)?;
            check_channel(*channel, h)?;
            let mut t = DenseTensor::zeros(vec![p, p, h, h]);
            for i in 0..p {
                for k in 0..h {
                    for l in 0..h {
                        if (k, l) != (*channel, *channel) {
                            t.set(&[i, i, k, l], 1.0);
                        }
                    }
                }
            }
            for &a in allowed {
                t.set(&[a, a, *channel, *channel], *weight);
            }
            t
        }
    };
    Ok(t)
}

/// Rules sharing a first involved machine, ordered by last involved machine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bucket {
    pub first: usize,
    pub rules: Vec<usize>,
}

pub fn rearrange_rules(rules: &[Rule]) -> Vec<Bucket> {
    let mut buckets: Vec<Bucket> = Vec::new();
    let mut order: Vec<usize> = (0..rules.len()).collect();
    order.sort_by_key(|&k| (rules[k].first_machine(), rules[k].last_machine(), k));
    for k in order {
        let first = rules[k].first_machine();
        match buckets.last_mut() {
            Some(b) if b.first == first => b.rules.push(k),
            _ => buckets.push(Bucket {
                first,
                rules: vec![k],
            }),
        }
    }
    buckets
}

/// Rules compiled together into one layer. Rule `rules[c - 1]` rides channel `c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleGroup {
    pub first: usize,
    pub last: usize,
    pub target: usize,
    pub rules: Vec<usize>,
}

impl RuleGroup {
    pub fn channel_of(&self, rule: usize) -> Option<usize> {
        self.rules.iter().position(|&r| r == rule).map(|c| c + 1)
    }

    pub(crate) fn accepts(&self, candidate: &Rule, rules: &[Rule], task_counts: &[usize]) -> bool {
        if candidate.last_machine() != self.last
            || candidate.target_machine != self.target
            || candidate.first_machine() != self.first
            || self.rules.len() >= task_counts[self.first]
        {
            return false;
        }
        let ends = emitting_ends(self.first, self.last, self.target);
        ends.into_iter().all(|end| {
            let value = candidate.condition_on(end);
            self.rules
                .iter()
                .all(|&r| rules[r].condition_on(end) != value)
        })
    }
}

/// Machines that originate signals: the span ends that are not the target.
fn emitting_ends(first: usize, last: usize, target: usize) -> Vec<usize> {
    let mut ends = Vec::with_capacity(2);
    if first != target {
        ends.push(first);
    }
    if last != target && last != first {
        ends.push(last);
    }
    ends
}

/// First-fit packing of a bucket into groups.
pub fn condense(bucket: &Bucket, rules: &[Rule], task_counts: &[usize]) -> Vec<RuleGroup> {
    let mut groups: Vec<RuleGroup> = Vec::new();
    for &k in &bucket.rules {
        let rule = &rules[k];
        if let Some(g) = groups
            .iter_mut()
            .find(|g| g.accepts(rule, rules, task_counts))
        {
            g.rules.push(k);
        } else {
            groups.push(RuleGroup {
                first: rule.first_machine(),
                last: rule.last_machine(),
                target: rule.target_machine,
                rules: vec![k],
            });
        }
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteRole {
    /// Machine inside the span that no rule of the group mentions.
    Identity,
    /// Span end originating the channels.
    Control,
    /// Condition machine between a control and the projector.
    Relay,
    /// Target at a span end, fed from one side.
    Projector,
    /// Target strictly inside the span, fed from both sides.
    Conjunction,
}

/// Direction in which signals travel through a site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Rightward,
    Leftward,
    Inward,
}

#[derive(Debug, Clone)]
pub struct CompiledSite {
    pub machine: usize,
    pub role: SiteRole,
    pub flow: Flow,
    pub tensor: Arc<SiteTensor>,
}

/// One compiled rule group: a diagonal operator on the machines in its span.
#[derive(Debug, Clone)]
pub struct RuleLayer {
    pub rules: Vec<usize>,
    pub first: usize,
    pub last: usize,
    pub target: usize,
    /// Horizontal extent inside the span; group size + 1.
    pub extent: usize,
    pub sites: Vec<CompiledSite>,
    /// Per channel: allowed target tasks and pass weight.
    projections: Vec<(Vec<usize>, f64)>,
}

impl RuleLayer {
    pub fn site(&self, machine: usize) -> Option<&CompiledSite> {
        if machine < self.first || machine > self.last {
            return None;
        }
        self.sites.get(machine - self.first)
    }

    /// Horizontal extent of the cut between `machine - 1` and `machine`.
    pub fn cut_extent(&self, machine: usize) -> usize {
        if machine > self.first && machine <= self.last {
            self.extent
        } else {
            1
        }
    }

    /// The site at `machine` with unused horizontal legs removed and legs
    /// ordered as `[v_in, v_out, h_in, h_out]` along the signal direction.
    pub fn primitive_layout(&self, machine: usize) -> Option<DenseTensor> {
        let site = self.site(machine)?;
        let t = site.tensor.tensor();
        let s = t.shape();
        let t = if site.flow == Flow::Leftward && s[2] > 1 && s[3] > 1 {
            t.permute(&[0, 1, 3, 2])
        } else {
            t.clone()
        };
        let s = t.shape().to_vec();
        let mut shape = vec![s[0], s[1]];
        shape.extend(s[2..].iter().copied().filter(|&e| e != 1));
        Some(t.reshape(shape).expect("dropping unit axes keeps the length"))
    }

    /// Human-readable dump, stable for golden-file comparison.
    pub fn describe(&self, rules: &[Rule]) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "layer rules={:?} span={}..{} target={} channels={}",
            self.rules, self.first, self.last, self.target, self.extent
        );
        for site in &self.sites {
            let role = match site.role {
                SiteRole::Identity => "identity",
                SiteRole::Control => "control",
                SiteRole::Relay => "relay",
                SiteRole::Projector => "projector",
                SiteRole::Conjunction => "conjunction",
            };
            let flow = match site.flow {
                Flow::Rightward => ">",
                Flow::Leftward => "<",
                Flow::Inward => "><",
            };
            let _ = write!(out, "  m{} {role} {flow}", site.machine);
            for (c, &k) in self.rules.iter().enumerate() {
                let channel = c + 1;
                match site.role {
                    SiteRole::Projector | SiteRole::Conjunction => {
                        let (allowed, w) = &self.projections[c];
                        let _ = write!(out, " ch{channel}:{allowed:?}");
                        if *w != 1.0 {
                            let _ = write!(out, "w={w:.6}");
                        }
                    }
                    SiteRole::Identity => {}
                    _ => match rules[k].condition_on(site.machine) {
                        Some(t) => {
                            let _ = write!(out, " ch{channel}:{t}");
                        }
                        None => {
                            let _ = write!(out, " ch{channel}:*");
                        }
                    },
                }
            }
            let nnz = site.tensor.tensor().data().iter().filter(|&&v| v != 0.0).count();
            let _ = writeln!(out, " nnz={nnz}");
        }
        out
    }
}

pub fn compile_group(
    group: &RuleGroup,
    rules: &[Rule],
    task_counts: &[usize],
    tau: f64,
) -> Result<RuleLayer> {
    let (first, last, target) = (group.first, group.last, group.target);
    if group.rules.is_empty() {
        return Err(Error::Compile("empty rule group".into()));
    }
    for &k in &group.rules {
        let r = rules
            .get(k)
            .ok_or_else(|| Error::Compile(format!("rule index {k} out of range")))?;
        if r.first_machine() != first || r.last_machine() != last || r.target_machine != target {
            return Err(Error::Compile(format!(
                "rule {k} does not share span {first}..{last} and target {target} with its group"
            )));
        }
        if last >= task_counts.len() {
            return Err(Error::Compile(format!("rule {k} exceeds the machine range")));
        }
    }
    if group.rules.len() > task_counts[first] {
        return Err(Error::Compile(format!(
            "group of {} rules exceeds the {} states of machine {first}",
            group.rules.len(),
            task_counts[first]
        )));
    }
    let members: Vec<&Rule> = group.rules.iter().map(|&k| &rules[k]).collect();
    for end in emitting_ends(first, last, target) {
        let mut seen: Vec<Option<usize>> = Vec::new();
        for r in &members {
            let v = r.condition_on(end);
            if v.is_none() || seen.contains(&v) {
                return Err(Error::Compile(format!(
                    "rules in one group need distinct conditions on machine {end}"
                )));
            }
            seen.push(v);
        }
    }

    let h = members.len() + 1;
    let projections: Vec<(Vec<usize>, f64)> = members
        .iter()
        .map(|r| {
            let w = (-tau * r.extra_cost.unwrap_or(0.0)).exp();
            (r.target_tasks.clone(), w)
        })
        .collect();

    let mut sites = Vec::with_capacity(last - first + 1);
    for (machine, &p) in task_counts.iter().enumerate().take(last + 1).skip(first) {
        let hl = if machine == first { 1 } else { h };
        let hr = if machine == last { 1 } else { h };
        let mut t = DenseTensor::zeros(vec![p, p, hl, hr]);
        let flow = if machine < target {
            Flow::Rightward
        } else if machine > target {
            Flow::Leftward
        } else {
            Flow::Inward
        };
        // Place an entry given the incoming and outgoing channel along the flow.
        let place = |t: &mut DenseTensor, v: usize, input: usize, output: usize, value: f64| match flow {
            Flow::Rightward => t.set(&[v, v, input, output], value),
            Flow::Leftward => t.set(&[v, v, output, input], value),
            Flow::Inward => unreachable!("projectors place entries directly"),
        };

        let role = if machine == target {
            let two_sided = machine != first && machine != last;
            for v in 0..p {
                if two_sided {
                    for l in 0..h {
                        for r in 0..h {
                            let value = if l == r && l != 0 {
                                let (allowed, w) = &projections[l - 1];
                                if allowed.contains(&v) { *w } else { 0.0 }
                            } else {
                                1.0
                            };
                            t.set(&[v, v, l, r], value);
                        }
                    }
                } else {
                    for c in 0..h {
                        let value = if c == 0 {
                            1.0
                        } else {
                            let (allowed, w) = &projections[c - 1];
                            if allowed.contains(&v) { *w } else { 0.0 }
                        };
                        if machine == last {
                            t.set(&[v, v, c, 0], value);
                        } else {
                            t.set(&[v, v, 0, c], value);
                        }
                    }
                }
            }
            if two_sided {
                SiteRole::Conjunction
            } else {
                SiteRole::Projector
            }
        } else if machine == first || machine == last {
            for v in 0..p {
                let channel = members
                    .iter()
                    .position(|r| r.condition_on(machine) == Some(v))
                    .map_or(0, |c| c + 1);
                place(&mut t, v, 0, channel, 1.0);
            }
            SiteRole::Control
        } else {
            let involved = members.iter().any(|r| r.condition_on(machine).is_some());
            for v in 0..p {
                for c in 0..h {
                    let output = if c == 0 {
                        0
                    } else {
                        match members[c - 1].condition_on(machine) {
                            Some(t) if t != v => 0,
                            _ => c,
                        }
                    };
                    place(&mut t, v, c, output, 1.0);
                }
            }
            if involved {
                SiteRole::Relay
            } else {
                SiteRole::Identity
            }
        };
        sites.push(CompiledSite {
            machine,
            role,
            flow,
            tensor: Arc::new(SiteTensor::new(t)?),
        });
    }

    Ok(RuleLayer {
        rules: group.rules.clone(),
        first,
        last,
        target,
        extent: h,
        sites,
        projections,
    })
}

/// Rearranges, condenses and compiles every rule. Layer order is emission
/// order; all layers are diagonal so their product does not depend on it.
/// The rule operator alone: unit inputs, traced plugs and one row per layer.
pub fn operator_network(layers: &[RuleLayer], task_counts: &[usize]) -> Network {
    let columns = task_counts
        .iter()
        .enumerate()
        .map(|(i, &p)| SiteColumn {
            input: vec![1.0; p],
            sites: layers
                .iter()
                .enumerate()
                .filter_map(|(k, layer)| {
                    layer.site(i).map(|s| LayerSite {
                        layer: k,
                        tensor: s.tensor.clone(),
                    })
                })
                .collect(),
            plug: Plug::Trace,
        })
        .collect();
    Network {
        layer_count: layers.len(),
        columns,
    }
}

pub fn compile_all(rules: &[Rule], task_counts: &[usize], tau: f64) -> Result<Vec<RuleLayer>> {
    let mut layers = Vec::new();
    for bucket in rearrange_rules(rules) {
        for group in condense(&bucket, rules, task_counts) {
            debug_assert!(group.rules.len() <= task_counts[group.first]);
            layers.push(compile_group(&group, rules, task_counts, tau)?);
        }
    }
    Ok(layers)
}

//! Synthetic clickstream logs drawn from a mixture of shopper personas.
//!
//! Every persona has a browsing behavior and a buying behavior. A fixed
//! share of each persona's users (its purchase ratio) follow the buying
//! behavior and end their journey with a purchase; the rest only browse.
//! Persona and purchaser counts are allocated by quota, so realized
//! fractions differ from targets only by rounding.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::event::{DatasetProfile, Event, EventType, ProfileName};
use super::stream::EventWriter;
use crate::error::{Error, Result};
use crate::seed::{derived_rng, Rng};

/// Relative weights of the non-purchase event types.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventMix {
    pub view: f64,
    pub cart: f64,
    pub remove: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Behavior {
    /// Inclusive range of sessions per user.
    pub sessions: (u32, u32),
    /// Inclusive range of non-purchase events per session.
    pub events_per_session: (u32, u32),
    pub mix: EventMix,
    /// Inclusive range of seconds between consecutive events of a session.
    pub dwell_secs: (u32, u32),
    pub price: (f64, f64),
    /// Size of the brand pool the user shops from.
    pub brands: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaSpec {
    pub name: String,
    /// Target fraction of users.
    pub rep: f64,
    /// Target fraction of purchasing journeys.
    pub pur: f64,
    pub browse: Behavior,
    pub buyer: Behavior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub profile: ProfileName,
    pub personas: Vec<PersonaSpec>,
    pub seed: u64,
    pub n_users: usize,
    /// Epoch seconds of the earliest journey start.
    pub start_time: i64,
    /// Journeys start uniformly within this many seconds of `start_time`.
    pub horizon_secs: i64,
}

pub const NEW_SHOPPER: &str = "New Shopper";
pub const IMPULSIVE_SHOPPER: &str = "Impulsive Shopper";

const DEC_2019: i64 = 1_575_158_400;
const THIRTY_DAYS: i64 = 30 * 86_400;

fn behavior(
    sessions: (u32, u32),
    events_per_session: (u32, u32),
    (view, cart, remove): (f64, f64, f64),
    dwell_secs: (u32, u32),
    price: (f64, f64),
    brands: u32,
) -> Behavior {
    Behavior {
        sessions,
        events_per_session,
        mix: EventMix { view, cart, remove },
        dwell_secs,
        price,
        brands,
    }
}

impl GeneratorSpec {
    /// Five cosmetics personas with the published representation and
    /// purchase-ratio targets. The published representation column sums to
    /// 100.71%, so it is renormalized to 1.
    pub fn cosmetics_preset(n_users: usize, seed: u64) -> Self {
        let table = [
            (NEW_SHOPPER, 91.9, 11.14),
            (IMPULSIVE_SHOPPER, 4.83, 21.01),
            ("Educated Perusing Shopper", 2.19, 19.45),
            ("Intentional Shopper", 1.17, 22.84),
            ("Returning Budget Shopper", 0.62, 32.91),
        ];
        let total: f64 = table.iter().map(|t| t.1).sum();
        let behaviors = [
            (
                behavior((1, 1), (2, 4), (0.9, 0.08, 0.02), (5, 20), (8.0, 10.0), 2),
                behavior((1, 1), (2, 4), (0.4, 0.55, 0.05), (5, 20), (8.0, 10.0), 2),
            ),
            (
                behavior((2, 2), (14, 16), (0.9, 0.08, 0.02), (2, 6), (4.0, 6.0), 6),
                behavior((2, 2), (14, 16), (0.86, 0.12, 0.02), (2, 6), (4.0, 6.0), 6),
            ),
            (
                behavior((6, 7), (6, 7), (0.8, 0.15, 0.05), (100, 130), (12.0, 14.0), 5),
                behavior((6, 7), (6, 7), (0.6, 0.35, 0.05), (100, 130), (12.0, 14.0), 5),
            ),
            (
                behavior((3, 3), (6, 8), (0.3, 0.55, 0.15), (30, 50), (30.0, 40.0), 4),
                behavior((3, 3), (6, 8), (0.2, 0.7, 0.1), (30, 50), (30.0, 40.0), 4),
            ),
            (
                behavior((12, 13), (3, 4), (0.6, 0.3, 0.1), (10, 20), (1.0, 2.0), 15),
                behavior((12, 13), (3, 4), (0.45, 0.5, 0.05), (10, 20), (1.0, 2.0), 15),
            ),
        ];
        let personas = table
            .iter()
            .zip(behaviors)
            .map(|(&(name, rep, pur), (browse, buyer))| PersonaSpec {
                name: name.to_string(),
                rep: rep / total,
                pur: pur / 100.0,
                browse,
                buyer,
            })
            .collect();
        Self {
            profile: ProfileName::Cosmetics,
            personas,
            seed,
            n_users,
            start_time: DEC_2019,
            horizon_secs: THIRTY_DAYS,
        }
    }

    /// Five electronics personas with the published targets; there are no
    /// cart removals in this profile.
    pub fn electronics_preset(n_users: usize, seed: u64) -> Self {
        let table = [
            (NEW_SHOPPER, 99.09, 1.35),
            ("Decisive Shopper", 0.43, 6.47),
            (IMPULSIVE_SHOPPER, 0.25, 6.91),
            ("Brand Shopper", 0.18, 7.68),
            ("Returning Decisive Shopper", 0.05, 8.59),
        ];
        let total: f64 = table.iter().map(|t| t.1).sum();
        let behaviors = [
            (
                behavior((1, 2), (2, 5), (0.95, 0.05, 0.0), (5, 40), (290.0, 402.0), 3),
                behavior((1, 2), (3, 5), (0.4, 0.6, 0.0), (20, 60), (290.0, 402.0), 3),
            ),
            (
                behavior((2, 3), (5, 7), (0.4, 0.6, 0.0), (30, 60), (500.0, 900.0), 2),
                behavior((2, 3), (5, 7), (0.25, 0.75, 0.0), (30, 60), (500.0, 900.0), 2),
            ),
            (
                behavior((2, 3), (14, 18), (0.92, 0.08, 0.0), (2, 10), (100.0, 300.0), 6),
                behavior((2, 3), (14, 18), (0.82, 0.18, 0.0), (2, 10), (100.0, 300.0), 6),
            ),
            (
                behavior((3, 4), (6, 8), (0.8, 0.2, 0.0), (60, 120), (300.0, 600.0), 12),
                behavior((3, 4), (6, 8), (0.6, 0.4, 0.0), (60, 120), (300.0, 600.0), 12),
            ),
            (
                behavior((9, 12), (3, 5), (0.6, 0.4, 0.0), (10, 30), (50.0, 150.0), 4),
                behavior((9, 12), (3, 5), (0.4, 0.6, 0.0), (10, 30), (50.0, 150.0), 4),
            ),
        ];
        let personas = table
            .iter()
            .zip(behaviors)
            .map(|(&(name, rep, pur), (browse, buyer))| PersonaSpec {
                name: name.to_string(),
                rep: rep / total,
                pur: pur / 100.0,
                browse,
                buyer,
            })
            .collect();
        Self {
            profile: ProfileName::Electronics,
            personas,
            seed,
            n_users,
            start_time: DEC_2019,
            horizon_secs: THIRTY_DAYS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InfeasibleSpec(msg));
        if self.personas.is_empty() {
            return bad("no personas".into());
        }
        if self.n_users == 0 {
            return bad("n_users must be positive".into());
        }
        if self.horizon_secs < 0 {
            return bad("negative horizon".into());
        }
        let rep_sum: f64 = self.personas.iter().map(|p| p.rep).sum();
        if (rep_sum - 1.0).abs() > 1e-9 {
            return bad(format!("representation targets sum to {rep_sum}, not 1"));
        }
        let profile = DatasetProfile::by_name(self.profile);
        for p in &self.personas {
            if !(0.0..=1.0).contains(&p.rep) || !(0.0..=1.0).contains(&p.pur) {
                return bad(format!("persona `{}` has targets outside [0, 1]", p.name));
            }
            for (which, b) in [("browse", &p.browse), ("buyer", &p.buyer)] {
                let ctx = |what: &str| format!("persona `{}` {which} behavior: {what}", p.name);
                if b.sessions.0 > b.sessions.1
                    || b.events_per_session.0 > b.events_per_session.1
                    || b.dwell_secs.0 > b.dwell_secs.1
                    || !(b.price.0 <= b.price.1)
                {
                    return bad(ctx("inverted range"));
                }
                let in_use = (which == "browse" && p.pur < 1.0) || (which == "buyer" && p.pur > 0.0);
                if in_use && (b.sessions.1 == 0 || b.events_per_session.1 == 0) {
                    return bad(ctx("zero event intensity"));
                }
                if b.sessions.0 == 0 || b.events_per_session.0 == 0 {
                    return bad(ctx("every journey needs at least one session with one event"));
                }
                if b.price.0 < 0.0 || b.brands == 0 {
                    return bad(ctx("negative price or empty brand pool"));
                }
                let m = b.mix;
                if [m.view, m.cart, m.remove].iter().any(|w| !(*w >= 0.0)) || m.view + m.cart + m.remove <= 0.0 {
                    return bad(ctx("event mix weights must be non-negative and not all zero"));
                }
                let mixed = [
                    (EventType::View, m.view),
                    (EventType::Cart, m.cart),
                    (EventType::RemoveFromCart, m.remove),
                ];
                if let Some((t, _)) = mixed.iter().find(|(t, w)| *w > 0.0 && !profile.allows(*t)) {
                    return bad(ctx(&format!("event type `{t}` not in profile `{}`", self.profile)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PersonaTally {
    pub name: String,
    pub users: usize,
    pub purchasers: usize,
}

/// Ground truth and bookkeeping for a generated log.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GeneratorManifest {
    /// user id → persona name.
    pub personas: BTreeMap<String, String>,
    pub events: u64,
    pub sessions: u64,
    pub purchasing_sessions: u64,
    pub purchase_events: u64,
    pub tallies: Vec<PersonaTally>,
}

impl GeneratorManifest {
    /// The `{user_id: persona}` object.
    pub fn personas_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.personas)?)
    }
}

/// Splits `total` into integer counts proportional to `weights`
/// (largest remainder, ties to the lower index).
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn session_id(rng: &mut Rng) -> String {
    let a: u128 = rng.gen();
    format!(
        "{:08x}-{:04x}-{:04x}-{:04x}-{:012x}",
        (a >> 96) as u32,
        (a >> 80) as u16,
        (a >> 64) as u16,
        (a >> 48) as u16,
        a as u64 & 0xFFFF_FFFF_FFFF
    )
}

fn pick_type(rng: &mut Rng, mix: &EventMix) -> EventType {
    let total = mix.view + mix.cart + mix.remove;
    let u = rng.gen::<f64>() * total;
    if u < mix.view {
        EventType::View
    } else if u < mix.view + mix.cart || mix.remove == 0.0 {
        EventType::Cart
    } else {
        EventType::RemoveFromCart
    }
}

struct UserPlan<'a> {
    user_id: String,
    persona: usize,
    buys: bool,
    behavior: &'a Behavior,
}

fn emit_user<W: Write>(
    plan: &UserPlan<'_>,
    spec: &GeneratorSpec,
    rng: &mut Rng,
    out: &mut EventWriter<W>,
    manifest: &mut GeneratorManifest,
) -> Result<()> {
    let b = plan.behavior;
    let brand_base = plan.persona as u32 * 100;
    let mut t = spec.start_time + rng.gen_range(0..=spec.horizon_secs);
    let n_sessions = rng.gen_range(b.sessions.0..=b.sessions.1);
    let mut last_product: Option<(String, String, String, f64)> = None;
    for s in 0..n_sessions {
        let sid = session_id(rng);
        let n_events = rng.gen_range(b.events_per_session.0..=b.events_per_session.1);
        for _ in 0..n_events {
            let event_type = pick_type(rng, &b.mix);
            let brand_idx = brand_base + rng.gen_range(0..b.brands);
            let product = format!("{}", 1_000_000 + brand_idx * 1000 + rng.gen_range(0..50u32));
            let price = (rng.gen_range(b.price.0..=b.price.1) * 100.0).round() / 100.0;
            let event = Event {
                user_id: plan.user_id.clone(),
                session_id: sid.clone(),
                event_time: t,
                event_type,
                product_id: product,
                category: format!("{}", 2_000 + brand_idx / 4),
                category_code: String::new(),
                brand: format!("brand{brand_idx}"),
                price,
            };
            out.write(&event)?;
            manifest.events += 1;
            if event_type == EventType::Cart || last_product.is_none() {
                last_product = Some((event.product_id, event.category, event.brand, price));
            }
            t += i64::from(rng.gen_range(b.dwell_secs.0..=b.dwell_secs.1));
        }
        manifest.sessions += 1;
        let last_session = s + 1 == n_sessions;
        if plan.buys && last_session {
            let (product_id, category, brand, price) = last_product.clone().expect("sessions have at least one event");
            out.write(&Event {
                user_id: plan.user_id.clone(),
                session_id: sid,
                event_time: t,
                event_type: EventType::Purchase,
                product_id,
                category,
                category_code: String::new(),
                brand,
                price,
            })?;
            manifest.events += 1;
            manifest.purchase_events += 1;
            manifest.purchasing_sessions += 1;
        }
        t += rng.gen_range(1_800..=3 * 86_400);
    }
    Ok(())
}

/// Writes a synthetic log to `out` and returns its ground-truth manifest.
/// Output is a pure function of the spec (including its seed).
pub fn generate_synthetic<W: Write>(spec: &GeneratorSpec, out: W) -> Result<(GeneratorManifest, W)> {
    spec.validate()?;
    let mut writer = EventWriter::new(out)?;
    let reps: Vec<f64> = spec.personas.iter().map(|p| p.rep).collect();
    let users_per = apportion(spec.n_users, &reps);

    let mut assignment: Vec<usize> = users_per
        .iter()
        .enumerate()
        .flat_map(|(p, &n)| std::iter::repeat_n(p, n))
        .collect();
    let mut shuffle_rng = derived_rng(spec.seed, &[0]);
    assignment.shuffle(&mut shuffle_rng);

    // Per persona, a random subset of its users of exactly round(PuR * n) buys.
    let mut buys = vec![false; spec.n_users];
    let mut tallies = Vec::with_capacity(spec.personas.len());
    for (p, persona) in spec.personas.iter().enumerate() {
        let mut members: Vec<usize> = (0..spec.n_users).filter(|&u| assignment[u] == p).collect();
        let n_buy = (persona.pur * members.len() as f64).round() as usize;
        members.shuffle(&mut derived_rng(spec.seed, &[1, p as u64]));
        for &u in &members[..n_buy] {
            buys[u] = true;
        }
        tallies.push(PersonaTally {
            name: persona.name.clone(),
            users: members.len(),
            purchasers: n_buy,
        });
    }

    let mut manifest = GeneratorManifest {
        tallies,
        ..Default::default()
    };
    for u in 0..spec.n_users {
        let persona = &spec.personas[assignment[u]];
        let plan = UserPlan {
            user_id: format!("{}", 500_000_000 + u),
            persona: assignment[u],
            buys: buys[u],
            behavior: if buys[u] { &persona.buyer } else { &persona.browse },
        };
        let mut rng = derived_rng(spec.seed, &[2, u as u64]);
        emit_user(&plan, spec, &mut rng, &mut writer, &mut manifest)?;
        manifest.personas.insert(plan.user_id, persona.name.clone());
    }
    let out = writer.finish()?;
    Ok((manifest, out))
}

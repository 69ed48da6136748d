use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CollisionEvent, ObjectRecord};
use crate::physics::{ContactKind, ShapeClass, ShapeSpec, Side, WORLD_SIZE};

pub use crate::eval::tokenize;

/// Texts stay strictly below this many tokens.
const MAX_TOKENS: usize = 60;

/// Coarse 3×3 grid name for a position, e.g. "upper left" or "center".
pub fn location_words(x: f64, y: f64) -> &'static str {
    let cell = |v: f64| ((v / WORLD_SIZE * 3.0).floor() as i64).clamp(0, 2) as usize;
    const NAMES: [[&str; 3]; 3] = [
        ["lower left", "lower middle", "lower right"],
        ["middle left", "center", "middle right"],
        ["upper left", "upper middle", "upper right"],
    ];
    NAMES[cell(y)][cell(x)]
}

fn noun(o: &ObjectRecord) -> String {
    match o.shape {
        ShapeSpec::Boundary { side } => match side {
            Side::Floor => "floor",
            Side::Ceiling => "ceiling",
            Side::Left => "left wall",
            Side::Right => "right wall",
        }
        .to_string(),
        _ => {
            let shape = match o.class {
                ShapeClass::Circle => "ball",
                ShapeClass::Bar => "bar",
                ShapeClass::Jar => "jar",
                ShapeClass::Boundary => unreachable!(),
            };
            format!("{} {}", o.color.name(), shape)
        }
    }
}

fn join_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {}", init.join(" , "), last),
    }
}

fn push_capped(text: &mut Vec<String>, sentence: &str) -> bool {
    let toks = tokenize(sentence);
    if text.len() + toks.len() >= MAX_TOKENS {
        return false;
    }
    text.extend(toks);
    true
}

fn describe_scene(initial: &[ObjectRecord], rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut objects: Vec<&ObjectRecord> = initial.iter().filter(|o| o.class != ShapeClass::Boundary).collect();
    objects.sort_by_key(|o| (o.color, o.id));
    let mut cells: Vec<(&str, Vec<String>)> = Vec::new();
    for o in objects {
        let loc = location_words(o.x, o.y);
        let phrase = format!("a {}", noun(o));
        match cells.iter_mut().find(|(l, _)| *l == loc) {
            Some((_, list)) => list.push(phrase),
            None => cells.push((loc, vec![phrase])),
        }
    }
    let mut text = Vec::new();
    for (loc, list) in cells {
        let verb = if list.len() == 1 { "is" } else { "are" };
        let things = join_list(&list);
        let sentence = match [0, 1, 2].choose(rng).copied().unwrap_or(0) {
            0 => format!("{things} {verb} in the {loc} ."),
            1 => format!("in the {loc} there {verb} {things} ."),
            _ => format!("there {verb} {things} in the {loc} ."),
        };
        if !push_capped(&mut text, &sentence) {
            break;
        }
    }
    text
}

fn pick<'a>(rng: &mut ChaCha8Rng, options: &[&'a str]) -> &'a str {
    options.choose(rng).copied().unwrap_or(options[0])
}

fn describe_events(initial: &[ObjectRecord], salient: &[CollisionEvent], rng: &mut ChaCha8Rng) -> Vec<String> {
    let find = |id: usize| initial.iter().find(|o| o.id == id);
    let mut text = Vec::new();
    for (i, ev) in salient.iter().enumerate() {
        let (Some(oa), Some(ob)) = (find(ev.a.id), find(ev.b.id)) else {
            continue;
        };
        // the subject is the mover: the dynamic body, or the faster of two
        let b_moves = match (oa.dynamic, ob.dynamic) {
            (false, _) => true,
            (true, false) => false,
            (true, true) => ev.b.velocity.length() >= ev.a.velocity.length(),
        };
        let (subj, obj, v) = if b_moves { (ob, oa, ev.b.velocity) } else { (oa, ob, ev.a.velocity) };
        let falling = v.y.abs() >= v.x.abs();
        let verb = match (ev.kind, obj.dynamic) {
            (ContactKind::Begin, false) if falling => pick(rng, &["falls onto", "lands on", "drops onto"]),
            (ContactKind::Begin, false) => pick(rng, &["rolls onto", "slides onto"]),
            (ContactKind::Begin, true) => pick(rng, &["hits", "collides with", "knocks"]),
            (ContactKind::End, false) if falling && v.y > 0.0 => "bounces off",
            (ContactKind::End, false) => pick(rng, &["rolls off", "slides off"]),
            (ContactKind::End, true) => pick(rng, &["bounces off", "separates from"]),
        };
        let lead = if i == 0 { "" } else { pick(rng, &["then ", "", "next "]) };
        let sentence = format!("{lead}the {} {verb} the {} .", noun(subj), noun(obj));
        if !push_capped(&mut text, &sentence) {
            break;
        }
    }
    if text.is_empty() {
        text = tokenize("nothing else happens .");
    }
    text
}

/// Template descriptions of the initial scene and of the salient events.
/// Both are shorter than 60 tokens and fully determined by the inputs and `seed`.
pub fn gold_text(initial: &[ObjectRecord], salient: &[CollisionEvent], seed: u64) -> (Vec<String>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = describe_scene(initial, &mut rng);
    let sim = describe_events(initial, salient, &mut rng);
    (init, sim)
}

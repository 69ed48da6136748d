use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CollisionEvent, ObjectRecord, Participant};
use crate::error::{Error, Result};
use crate::physics::ShapeSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureType {
    ObjColor,
    ObjType,
    ObjState,
    X,
    Y,
    Vx,
    Vy,
    Angle,
    Radius,
    Length,
    Width,
    BaseLength,
    SideLength,
    Timestep,
}

impl FeatureType {
    pub const ALL: [FeatureType; 14] = [
        FeatureType::ObjColor,
        FeatureType::ObjType,
        FeatureType::ObjState,
        FeatureType::X,
        FeatureType::Y,
        FeatureType::Vx,
        FeatureType::Vy,
        FeatureType::Angle,
        FeatureType::Radius,
        FeatureType::Length,
        FeatureType::Width,
        FeatureType::BaseLength,
        FeatureType::SideLength,
        FeatureType::Timestep,
    ];

    pub fn token(self) -> &'static str {
        match self {
            FeatureType::ObjColor => "OBJ_COLOR",
            FeatureType::ObjType => "OBJ_TYPE",
            FeatureType::ObjState => "OBJ_STATE",
            FeatureType::X => "X",
            FeatureType::Y => "Y",
            FeatureType::Vx => "VX",
            FeatureType::Vy => "VY",
            FeatureType::Angle => "ANGLE",
            FeatureType::Radius => "RADIUS",
            FeatureType::Length => "LENGTH",
            FeatureType::Width => "WIDTH",
            FeatureType::BaseLength => "BASE_LENGTH",
            FeatureType::SideLength => "SIDE_LENGTH",
            FeatureType::Timestep => "TIMESTEP",
        }
    }
}

impl fmt::Display for FeatureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for FeatureType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FeatureType::ALL
            .into_iter()
            .find(|t| t.token() == s)
            .ok_or_else(|| Error::Parse(format!("unknown feature type {s:?}")))
    }
}

/// Table segment: the initial scene or the i-th salient event (from 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Segment {
    Initial,
    Event(usize),
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Segment::Initial => f.write_str("INITIAL_STATE"),
            Segment::Event(i) => write!(f, "EVENT_{i}"),
        }
    }
}

impl FromStr for Segment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "INITIAL_STATE" {
            return Ok(Segment::Initial);
        }
        s.strip_prefix("EVENT_")
            .and_then(|n| n.parse().ok())
            .filter(|&n| n >= 1)
            .map(Segment::Event)
            .ok_or_else(|| Error::Parse(format!("unknown segment {s:?}")))
    }
}

/// A single table record `value|entity|type|segment`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Record {
    pub value: String,
    pub entity: String,
    pub feature: FeatureType,
    pub segment: Segment,
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}|{}|{}", self.value, self.entity, self.feature, self.segment)
    }
}

pub fn parse_record_line(line: &str) -> Result<Record> {
    let parts: Vec<&str> = line.trim_end_matches(['\r', '\n']).split('|').collect();
    let [value, entity, feature, segment] = parts[..] else {
        return Err(Error::Parse(format!("expected 4 fields in {line:?}")));
    };
    if value.is_empty() || entity.is_empty() {
        return Err(Error::Parse(format!("empty field in {line:?}")));
    }
    Ok(Record {
        value: value.to_string(),
        entity: entity.to_string(),
        feature: feature.parse()?,
        segment: segment.parse()?,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordTable {
    pub records: Vec<Record>,
}

impl RecordTable {
    /// Records of the initial-scene segment only.
    pub fn initial_only(&self) -> RecordTable {
        RecordTable {
            records: self
                .records
                .iter()
                .filter(|r| r.segment == Segment::Initial)
                .cloned()
                .collect(),
        }
    }

    pub fn to_lines(&self) -> String {
        self.records.iter().map(|r| format!("{r}\n")).collect()
    }

    pub fn from_lines(text: &str) -> Result<RecordTable> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(parse_record_line)
            .collect::<Result<_>>()?;
        Ok(RecordTable { records })
    }
}

fn int(v: f64) -> String {
    // avoid a "-0" token
    let r = v.round();
    format!("{}", if r == 0.0 { 0.0 } else { r })
}

fn degrees(rad: f64) -> String {
    int(rad.to_degrees())
}

pub fn to_record_table(initial: &[ObjectRecord], salient: &[CollisionEvent]) -> RecordTable {
    let mut records = Vec::new();
    let mut push = |value: String, entity: &str, feature, segment| {
        records.push(Record {
            value,
            entity: entity.to_string(),
            feature,
            segment,
        })
    };
    for o in initial {
        let seg = Segment::Initial;
        push(o.color.name().into(), &o.name, FeatureType::ObjColor, seg);
        push(o.class.name().into(), &o.name, FeatureType::ObjType, seg);
        let state = if o.dynamic { "dynamic" } else { "static" };
        push(state.into(), &o.name, FeatureType::ObjState, seg);
        push(int(o.x), &o.name, FeatureType::X, seg);
        push(int(o.y), &o.name, FeatureType::Y, seg);
        match o.shape {
            ShapeSpec::Circle { radius } => push(int(radius), &o.name, FeatureType::Radius, seg),
            ShapeSpec::Bar {
                length,
                width,
                angle_rad,
            } => {
                push(int(length), &o.name, FeatureType::Length, seg);
                push(int(width), &o.name, FeatureType::Width, seg);
                push(degrees(angle_rad), &o.name, FeatureType::Angle, seg);
            }
            ShapeSpec::Jar {
                base_length,
                side_length,
                width,
                angle_rad,
            } => {
                push(int(base_length), &o.name, FeatureType::BaseLength, seg);
                push(int(side_length), &o.name, FeatureType::SideLength, seg);
                push(int(width), &o.name, FeatureType::Width, seg);
                push(degrees(angle_rad), &o.name, FeatureType::Angle, seg);
            }
            ShapeSpec::Boundary { .. } => {}
        }
    }
    let name = |id: usize| {
        initial
            .iter()
            .find(|o| o.id == id)
            .map(|o| o.name.clone())
            .unwrap_or_else(|| format!("object_{id}"))
    };
    for (i, ev) in salient.iter().enumerate() {
        let seg = Segment::Event(i + 1);
        let entity_a = name(ev.a.id);
        push(ev.timestep.to_string(), &entity_a, FeatureType::Timestep, seg);
        for (p, entity) in [(&ev.a, entity_a.clone()), (&ev.b, name(ev.b.id))] {
            let Participant {
                class,
                position,
                velocity,
                angle,
                ..
            } = *p;
            push(class.name().into(), &entity, FeatureType::ObjType, seg);
            push(int(position.x), &entity, FeatureType::X, seg);
            push(int(position.y), &entity, FeatureType::Y, seg);
            push(int(velocity.x), &entity, FeatureType::Vx, seg);
            push(int(velocity.y), &entity, FeatureType::Vy, seg);
            push(degrees(angle), &entity, FeatureType::Angle, seg);
        }
    }
    RecordTable { records }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_round_trip() {
        let line = "green|green_circle_0|OBJ_COLOR|INITIAL_STATE";
        let r = parse_record_line(line).unwrap();
        assert_eq!(r.feature, FeatureType::ObjColor);
        assert_eq!(r.to_string(), line);
        let e = parse_record_line("-12|red_circle_0|VY|EVENT_3").unwrap();
        assert_eq!(e.segment, Segment::Event(3));
    }

    #[test]
    fn malformed_lines_fail() {
        for bad in ["a|b|X", "a|b|NOPE|INITIAL_STATE", "a|b|X|EVENT_0", "|b|X|INITIAL_STATE"] {
            assert!(parse_record_line(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn no_negative_zero() {
        assert_eq!(int(-0.3), "0");
        assert_eq!(int(-0.6), "-1");
    }
}

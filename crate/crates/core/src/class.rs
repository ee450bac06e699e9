use serde::{Deserialize, Serialize};

/// Semantic class of a physical object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Unknown,
    Person,
    Bed,
}

impl ObjectClass {
    /// Two classes may describe the same object unless both are known and differ.
    pub fn compatible(self, other: ObjectClass) -> bool {
        self == other || self == ObjectClass::Unknown || other == ObjectClass::Unknown
    }

    /// Prefer the known class when merging.
    pub fn refine(self, other: ObjectClass) -> ObjectClass {
        match (self, other) {
            (ObjectClass::Unknown, c) => c,
            (c, _) => c,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            ObjectClass::Unknown => 0,
            ObjectClass::Person => 1,
            ObjectClass::Bed => 2,
        }
    }

    pub fn from_u8(code: u8) -> Option<ObjectClass> {
        match code {
            0 => Some(ObjectClass::Unknown),
            1 => Some(ObjectClass::Person),
            2 => Some(ObjectClass::Bed),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::Unknown => "unknown",
            ObjectClass::Person => "person",
            ObjectClass::Bed => "bed",
        }
    }
}

/// Label attached to an image-space detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionClass {
    Person,
    Foot,
    Bed,
}

impl DetectionClass {
    /// Object class a detection box stands for. Feet are parts, not objects.
    pub fn object_class(self) -> Option<ObjectClass> {
        match self {
            DetectionClass::Person => Some(ObjectClass::Person),
            DetectionClass::Bed => Some(ObjectClass::Bed),
            DetectionClass::Foot => None,
        }
    }
}

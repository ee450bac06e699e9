use std::io::Cursor;

use proptest::prelude::*;

use coperception::tracking::{ReportedObject, StampedObjectList};
use coperception::transport::wire::{read_frame, write_frame};
use coperception::transport::{decode, encode};
use coperception::{ObjectClass, Timestamp};

fn class() -> impl Strategy<Value = ObjectClass> {
    prop_oneof![Just(ObjectClass::Person), Just(ObjectClass::Bed), Just(ObjectClass::Unknown)]
}

fn object() -> impl Strategy<Value = ReportedObject> {
    (any::<u32>(), class(), prop::array::uniform5(any::<f64>()), prop::array::uniform3(any::<f64>())).prop_map(
        |(track_id, class, [x, y, yaw, v, omega], covariance)| ReportedObject { track_id, class, x, y, yaw, v, omega, covariance },
    )
}

fn message() -> impl Strategy<Value = StampedObjectList> {
    (any::<u32>(), any::<i64>(), prop::collection::vec(object(), 0..24)).prop_map(|(node_id, t, objects)| StampedObjectList {
        node_id,
        capture_timestamp: Timestamp::from_micros(t),
        objects,
    })
}

fn same_bits(a: &StampedObjectList, b: &StampedObjectList) -> bool {
    encode(a) == encode(b) && a.node_id == b.node_id && a.objects.len() == b.objects.len()
}

proptest! {
    #[test]
    fn round_trip_preserves_bytes(msg in message()) {
        let bytes = encode(&msg);
        let back = decode(&bytes).unwrap();
        prop_assert!(same_bits(&msg, &back));
        for (a, b) in msg.objects.iter().zip(&back.objects) {
            prop_assert_eq!(a.x.to_bits(), b.x.to_bits());
            prop_assert_eq!(a.covariance.map(f64::to_bits), b.covariance.map(f64::to_bits));
        }
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        let _ = decode(&bytes);
        let _ = read_frame(&mut Cursor::new(bytes));
    }

    #[test]
    fn truncation_is_an_error(msg in message(), cut in 0usize..2000) {
        let bytes = encode(&msg);
        let cut = cut % bytes.len();
        prop_assert!(decode(&bytes[..cut]).is_err());
    }
}

#[test]
fn stream_of_frames() {
    let msgs: Vec<StampedObjectList> = (0..5)
        .map(|i| StampedObjectList {
            node_id: i,
            capture_timestamp: Timestamp::from_millis_f64(100.0 * i as f64),
            objects: (0..i)
                .map(|k| ReportedObject {
                    track_id: k,
                    class: ObjectClass::Person,
                    x: k as f64,
                    y: -(k as f64),
                    yaw: 0.5,
                    v: 1.0,
                    omega: 0.0,
                    covariance: [0.01, 0.0, 0.01],
                })
                .collect(),
        })
        .collect();
    let mut buf = Vec::new();
    for m in &msgs {
        write_frame(&mut buf, m).unwrap();
    }
    let mut cursor = Cursor::new(buf);
    let mut read = Vec::new();
    while let Some(m) = read_frame(&mut cursor).unwrap() {
        read.push(m);
    }
    assert_eq!(read.len(), msgs.len());
    assert!(read.iter().zip(&msgs).all(|(a, b)| same_bits(a, b)));
}

#[test]
fn frame_cut_mid_stream_is_an_error() {
    let msg = StampedObjectList { node_id: 1, capture_timestamp: Timestamp::ZERO, objects: Vec::new() };
    let mut buf = encode(&msg);
    buf.extend_from_slice(&encode(&msg)[..10]);
    let mut cursor = Cursor::new(buf);
    assert!(read_frame(&mut cursor).unwrap().is_some());
    assert!(read_frame(&mut cursor).is_err());
}

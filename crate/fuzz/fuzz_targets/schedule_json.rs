#![no_main]

use libfuzzer_sys::fuzz_target;
use rabisim::protocols::PulseSchedule;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(schedule) = PulseSchedule::from_json(text) {
        let json = schedule.to_json().expect("valid schedule serializes");
        let again = PulseSchedule::from_json(&json).expect("serialized schedule reloads");
        assert_eq!(schedule, again);
        let _ = schedule.holds();
        let _ = schedule.sideband_modes();
    }
});

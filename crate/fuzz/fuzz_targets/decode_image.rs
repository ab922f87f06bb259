#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = image::load_from_memory(data) {
        // keep decoded sizes small enough that resizing stays cheap
        if img.width() <= 512 && img.height() <= 512 {
            let shape = vtriplet::network::InputShape::new(3, 24, 32);
            let _ = vtriplet::imaging::image_to_input(&img, &shape);
        }
    }
});

//! Every compressor on one vector: what it keeps, how far it lands from the
//! input, and how many bytes its wire frame takes. Each frame is encoded,
//! decoded and checked against the in-memory payload.

use liec::compressors::decompress;
use liec::harness::codec::{decode, encode, frame_len};
use liec::numerics::{sq_dist, sq_norm};
use liec::{CompressorSpec, ModelVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn main() -> anyhow::Result<()> {
    let x = ModelVector::new(vec![0.5, -3.0, 1.25, 0.0, -0.75, 2.0, -1.5, 0.25])?;
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    println!("x = {:?}  (dense frame would be {} B)", x.as_slice(), 1 + 4 + 8 * x.dim());
    for name in ["identity", "top-k:2", "random-k:2", "sign", "blockwise-sign:2"] {
        let spec: CompressorSpec = name.parse()?;
        let payload = spec.compress(&x, &mut rng)?;
        let bytes = encode(&payload);
        assert_eq!(bytes.len(), frame_len(&payload));
        assert_eq!(decode(&bytes)?, payload);
        let cx = decompress(&payload, x.dim())?;
        println!(
            "{:<18} {:>4} B  ‖x−C(x)‖²/‖x‖² = {:.4}  C(x) = {:?}",
            name,
            bytes.len(),
            sq_dist(&x, &cx)? / sq_norm(&x),
            cx.as_slice(),
        );
    }
    Ok(())
}

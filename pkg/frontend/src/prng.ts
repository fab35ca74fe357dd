/**
 * SplitMix64, the engine's replayable generator. Matches the Python
 * implementation bit for bit (see docs/sampling.md for test vectors);
 * bounded draws use plain modulo by contract.
 */

const MASK = 0xffffffffffffffffn;
const GOLDEN = 0x9e3779b97f4a7c15n;
const MIX1 = 0xbf58476d1ce4e5b9n;
const MIX2 = 0x94d049bb133111ebn;

export class SplitMix64 {
  private state: bigint;

  constructor(seed: bigint | number) {
    this.state = BigInt(seed) & MASK;
  }

  nextU64(): bigint {
    this.state = (this.state + GOLDEN) & MASK;
    let z = this.state;
    z = ((z ^ (z >> 30n)) * MIX1) & MASK;
    z = ((z ^ (z >> 27n)) * MIX2) & MASK;
    return z ^ (z >> 31n);
  }

  /** Integer in [0, n); consumes exactly one draw. */
  bounded(n: number): number {
    if (n <= 0) throw new RangeError("bounded() needs n >= 1");
    return Number(this.nextU64() % BigInt(n));
  }
}

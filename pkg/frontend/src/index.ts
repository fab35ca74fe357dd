export { SplitMix64 } from "./prng.js";
export { crc32 } from "./crc32.js";
export {
  BadMagic, ContainerHeader, CorruptIndex, DecompressFailed, FieldSpec,
  IndexOutOfRange, StoreError, StoreHandle, VersionMismatch, openStore,
} from "./store.js";
export {
  AllEpisodesTooShort, BatchField, DatasetHandle, LoaderMode, SequenceBatch,
  UseAfterClose, openDataset,
} from "./dataset.js";
export {
  DEFAULT_PALETTE, RenderSpec, RenderedImage, renderScreen,
} from "./render.js";

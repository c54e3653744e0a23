/**
 * The bundled source model: VGG19's sixteen-layer convolutional backbone.
 *
 * The build environment cannot reach a model zoo, so the pinned "vgg19"
 * shipped here is a deterministic stand-in: every tensor is filled by a
 * seeded generator keyed on SOURCE_VERSION and the tensor name, at the exact
 * names, shapes, and layout of the real backbone. Swapping genuine zoo
 * weights in is a drop-in replacement for loadSourceModel; nothing
 * downstream changes, because the container only promises names, shapes,
 * and bit-stable payloads.
 */
import type { Tensor } from "./stwb.js";

/** Conv stack in forward order: name, output channels, input channels. */
export const VGG19_LAYERS = [
  ["block1_conv1", 64, 3],
  ["block1_conv2", 64, 64],
  ["block2_conv1", 128, 64],
  ["block2_conv2", 128, 128],
  ["block3_conv1", 256, 128],
  ["block3_conv2", 256, 256],
  ["block3_conv3", 256, 256],
  ["block3_conv4", 256, 256],
  ["block4_conv1", 512, 256],
  ["block4_conv2", 512, 512],
  ["block4_conv3", 512, 512],
  ["block4_conv4", 512, 512],
  ["block5_conv1", 512, 512],
  ["block5_conv2", 512, 512],
  ["block5_conv3", 512, 512],
  ["block5_conv4", 512, 512],
] as const;

export const KERNEL_SIZE = 3;

/**
 * Version stamp of the bundled weight set. Exports are byte-reproducible
 * for a fixed stamp; bump it whenever the generation scheme changes.
 */
export const SOURCE_VERSION = "vgg19-bundled-1";

// Channel statistics the backbone expects applied to [0, 1] images.
export const MEANS = [0.485, 0.456, 0.406] as const;
export const SCALES = [0.229, 0.224, 0.225] as const;

export interface SourceLayer {
  /** Kernel in [out, in, kh, kw] order. */
  weight: Tensor;
  /** One value per output channel. */
  bias: Tensor;
}

function fnv1a(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) | 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 0x100000000;
  };
}

function filled(name: string, dims: readonly number[], scale: number): Tensor {
  const next = mulberry32(fnv1a(`${SOURCE_VERSION}/${name}`));
  const data = new Float32Array(dims.reduce((a, b) => a * b, 1));
  for (let i = 0; i < data.length; i++) {
    data[i] = (next() * 2 - 1) * scale;
  }
  return { dims: [...dims], data };
}

export function loadSourceModel(name: string): Map<string, SourceLayer> {
  if (name !== "vgg19") {
    throw new Error(`unknown source model ${JSON.stringify(name)}; only "vgg19" is bundled`);
  }
  const layers = new Map<string, SourceLayer>();
  for (const [layer, outChannels, inChannels] of VGG19_LAYERS) {
    const fanIn = inChannels * KERNEL_SIZE * KERNEL_SIZE;
    layers.set(layer, {
      weight: filled(
        `${layer}.weight`,
        [outChannels, inChannels, KERNEL_SIZE, KERNEL_SIZE],
        Math.sqrt(2 / fanIn),
      ),
      bias: filled(`${layer}.bias`, [outChannels], 0.01),
    });
  }
  return layers;
}

/**
 * Command line entry point: write the bundled backbone's conv weights into a
 * portable STWB container that the training engine loads directly.
 *
 *   export_weights --model vgg19 --map map.json --out vgg19.stwb
 *
 * The map file is a JSON object from source layer name to engine tag; each
 * mapped layer contributes a "{tag}.weight" and a "{tag}.bias" array, in map
 * order. Exit code 2 flags bad arguments, 1 any runtime failure.
 */
import { parseArgs } from "node:util";
import { readFileSync, writeFileSync } from "node:fs";
import { pathToFileURL } from "node:url";
import { packWeights, type Tensor } from "./stwb.js";
import { MEANS, SCALES, loadSourceModel } from "./vgg19.js";

/** A mapped layer name is not present in the source model. */
export class MissingLayer extends Error {}

/** Reading the map or writing the output failed at the filesystem level. */
export class IoError extends Error {}

export interface ExportSelection {
  model: string;
  /** Source layer name to engine tag, in output order. */
  mapping: ReadonlyMap<string, string>;
  out: string;
}

export function parseMapping(text: string): Map<string, string> {
  let parsed: unknown;
  try {
    parsed = JSON.parse(text);
  } catch (e) {
    throw new Error(`map file is not valid JSON: ${(e as Error).message}`);
  }
  if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
    throw new Error("map file must be a JSON object of layer name to tag");
  }
  const mapping = new Map<string, string>();
  const seen = new Set<string>();
  for (const [layer, tag] of Object.entries(parsed)) {
    if (typeof tag !== "string" || tag.length === 0) {
      throw new Error(`layer ${JSON.stringify(layer)} maps to a non-string tag`);
    }
    if (seen.has(tag)) {
      throw new Error(`tag ${JSON.stringify(tag)} is mapped twice`);
    }
    seen.add(tag);
    mapping.set(layer, tag);
  }
  if (mapping.size === 0) {
    throw new Error("map file selects no layers");
  }
  return mapping;
}

export function readMapping(path: string): Map<string, string> {
  let text: string;
  try {
    text = readFileSync(path, "utf-8");
  } catch (e) {
    throw new IoError(`cannot read map file ${JSON.stringify(path)}: ${(e as Error).message}`);
  }
  return parseMapping(text);
}

export function collectEntries(selection: ExportSelection): Map<string, Tensor> {
  const source = loadSourceModel(selection.model);
  const entries = new Map<string, Tensor>();
  for (const [layer, tag] of selection.mapping) {
    const found = source.get(layer);
    if (found === undefined) {
      throw new MissingLayer(`source model has no layer named ${JSON.stringify(layer)}`);
    }
    entries.set(`${tag}.weight`, found.weight);
    entries.set(`${tag}.bias`, found.bias);
  }
  return entries;
}

export function exportWeights(selection: ExportSelection): void {
  const entries = collectEntries(selection);
  const payload = packWeights(entries, { means: MEANS, scales: SCALES });
  try {
    writeFileSync(selection.out, payload);
  } catch (e) {
    throw new IoError(`cannot write ${JSON.stringify(selection.out)}: ${(e as Error).message}`);
  }
  const mib = payload.length / (1024 * 1024);
  console.log(`wrote ${entries.size} arrays (${mib.toFixed(1)} MiB) to ${selection.out}`);
}

const USAGE = "usage: export_weights --model vgg19 --map map.json --out weights.stwb";

export function run(argv: readonly string[]): number {
  let values: { model?: string; map?: string; out?: string };
  try {
    ({ values } = parseArgs({
      args: [...argv],
      options: {
        model: { type: "string" },
        map: { type: "string" },
        out: { type: "string" },
      },
    }));
  } catch (e) {
    console.error((e as Error).message);
    console.error(USAGE);
    return 2;
  }
  if (!values.model || !values.map || !values.out) {
    console.error(USAGE);
    return 2;
  }

  try {
    exportWeights({
      model: values.model,
      mapping: readMapping(values.map),
      out: values.out,
    });
  } catch (e) {
    console.error((e as Error).message);
    return 1;
  }
  return 0;
}

const invokedDirectly =
  process.argv[1] !== undefined && import.meta.url === pathToFileURL(process.argv[1]).href;
if (invokedDirectly) {
  process.exit(run(process.argv.slice(2)));
}

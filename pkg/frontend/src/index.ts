export * from "./runner.js";
export * from "./commands.js";
export * from "./notes.js";
export * from "./tokens.js";
export * from "./weights.js";
export * from "./midi.js";
export * from "./manifest.js";
export { Prng } from "./prng.js";

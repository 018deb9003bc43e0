/**
 * What-if probe session: a bounded client-side history so the author can
 * compare probes across edits. Replaying any entry's scene against the
 * service reproduces its bundle (the service owns traversal truth).
 */

import type { BundleDoc } from "./api.js";

export interface ProbeEntry {
  scene: string;
  bundle: BundleDoc;
  revision: number;
  at: number;
}

export const PROBE_HISTORY_LIMIT = 50;

export class ProbeSession {
  private entries: ProbeEntry[] = [];

  constructor(private limit: number = PROBE_HISTORY_LIMIT) {}

  add(scene: string, bundle: BundleDoc, revision: number, at: number = Date.now()): ProbeEntry {
    const entry: ProbeEntry = { scene, bundle, revision, at };
    this.entries.push(entry);
    if (this.entries.length > this.limit) {
      this.entries.splice(0, this.entries.length - this.limit);
    }
    return entry;
  }

  last(): ProbeEntry | undefined {
    return this.entries[this.entries.length - 1];
  }

  list(): readonly ProbeEntry[] {
    return this.entries;
  }

  clear(): void {
    this.entries = [];
  }
}

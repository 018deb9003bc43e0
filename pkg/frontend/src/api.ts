/**
 * Typed client for the tree service.
 *
 * The studio talks to the backend exclusively through this module; it never
 * computes verdicts or rankings itself (client-side re-ranking of an
 * already-fetched bundle lives in model.ts).
 */

export interface StatsDoc {
  r_e: number;
  r_n: number;
  r_c: number;
}

export interface StatementDoc {
  text: string;
  kind: string;
  status: string;
  stats: StatsDoc;
}

export interface ChildEdgeDoc {
  question: string;
  child: number;
}

export interface NodeDoc {
  id: number;
  depth: number;
  question_path: string[];
  statements: StatementDoc[];
  children: ChildEdgeDoc[];
  is_leaf: boolean;
}

export interface TreeDoc {
  character: string;
  kind: string;
  relation_target: string | null;
  config: Record<string, unknown>;
  root: number;
  nodes: NodeDoc[];
  revision: number;
  provenance: string;
}

export interface FiredEdgeDoc {
  parent: number;
  question: string;
  child: number;
  verdict: string;
}

export interface BundleStatementDoc extends StatementDoc {
  depth: number;
}

export interface BundleDoc {
  visited: number[];
  fired_edges: FiredEdgeDoc[];
  statements: BundleStatementDoc[];
  scene: string;
}

export interface GroundDoc {
  action: string;
  prompt: string;
  bundle: BundleDoc;
}

export interface JobDoc {
  id: string;
  state: "queued" | "running" | "done" | "failed";
  progress: { nodes_grown: number; oracle_calls: number };
  tree_id?: string;
  error?: string;
}

export interface EditCommand {
  op: "update_statement" | "detach_statement" | "delete_node" | "add_child";
  index?: number;
  text?: string;
  question?: string;
}

export interface EditResult {
  revision: number;
  tree: TreeDoc;
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
  }
}

/** 409: somebody else edited the tree since we loaded this revision. */
export class ConflictError extends ApiError {
  constructor(detail: string) {
    super(409, detail);
    this.name = "ConflictError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class StudioApi {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let detail = `${response.status}`;
      try {
        const body = await response.json();
        detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body);
      } catch {
        /* non-JSON error body */
      }
      if (response.status === 409) throw new ConflictError(detail);
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string; trees: string[] }> {
    return this.request("/health");
  }

  getTree(treeId: string): Promise<TreeDoc> {
    return this.request(`/trees/${treeId}`);
  }

  traverse(treeId: string, scene: string): Promise<BundleDoc> {
    return this.request(`/trees/${treeId}/traverse`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ scene }),
    });
  }

  ground(treeId: string, scene: string, policy: string, k: number): Promise<GroundDoc> {
    return this.request(`/trees/${treeId}/ground`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ scene, policy, k }),
    });
  }

  editNode(
    treeId: string,
    nodeId: number,
    revision: number,
    command: EditCommand,
  ): Promise<EditResult> {
    return this.request(`/trees/${treeId}/nodes/${nodeId}`, {
      method: "PATCH",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ revision, command }),
    });
  }

  startInduction(pairsPath: string, config: Record<string, unknown> = {}): Promise<{ job_id: string }> {
    return this.request("/trees", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ pairs_path: pairsPath, config }),
    });
  }

  job(jobId: string): Promise<JobDoc> {
    return this.request(`/jobs/${jobId}`);
  }

  async verbalized(treeId: string): Promise<string> {
    const response = await this.fetchFn(`${this.baseUrl}/trees/${treeId}/verbalized`);
    if (!response.ok) throw new ApiError(response.status, await response.text());
    return response.text();
  }

  async abolishedLog(treeId: string): Promise<Array<Record<string, unknown>>> {
    const payload = await this.request<{ events: Array<Record<string, unknown>> }>(
      `/trees/${treeId}/log`,
    );
    return payload.events.filter((event) => event["decision"] === "Reject");
  }
}

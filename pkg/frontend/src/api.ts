// Typed client for the outfit-generation service. All failures surface as
// ApiError carrying the service's structured {code, message} envelope.

export interface ItemSummary {
  item_id: string;
  coarse_category: string;
  fine_category: string | null;
}

export interface ItemsPage {
  items: ItemSummary[];
  page: number;
  page_size: number;
  total: number;
}

export interface TemplateInfo {
  name: string;
  slots: string[];
}

export interface OutfitResult {
  item_ids: string[];
  categories: string[];
  score: number;
}

export interface StyleResults {
  style: string;
  outfits: OutfitResult[];
}

export interface GenerateResponse {
  anchor_item_id: string;
  template: string[];
  results: StyleResults[];
}

export interface GenerateRequest {
  anchor_item_id: string;
  style: string; // a style name or "all"
  template?: string | string[];
  top_k?: number;
}

export class ApiError extends Error {
  constructor(
    public code: string,
    message: string,
    public status: number,
  ) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError("network_error", String(err), 0);
    }
    const body = await response.json().catch(() => null);
    if (!response.ok) {
      const envelope = body?.error;
      throw new ApiError(
        envelope?.code ?? "unknown_error",
        envelope?.message ?? `request failed with status ${response.status}`,
        response.status,
      );
    }
    return body as T;
  }

  getCategories(): Promise<{ categories: string[] }> {
    return this.request("/categories");
  }

  getItems(category: string, page = 0, pageSize = 60): Promise<ItemsPage> {
    const params = new URLSearchParams({
      category,
      page: String(page),
      page_size: String(pageSize),
    });
    return this.request(`/items?${params}`);
  }

  getStyles(category?: string): Promise<{ styles: string[] }> {
    const suffix = category ? `?${new URLSearchParams({ category })}` : "";
    return this.request(`/styles${suffix}`);
  }

  getTemplates(): Promise<{ templates: TemplateInfo[] }> {
    return this.request("/templates");
  }

  generate(req: GenerateRequest): Promise<GenerateResponse> {
    return this.request("/generate", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
    });
  }
}
